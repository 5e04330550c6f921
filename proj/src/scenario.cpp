#include "eucgo/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "eucgo/field_io.hpp"

namespace eucgo {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw Error("cli_runner.scenario", (path.empty() ? std::string("scenario") : path) + ": " + what);
}

// Reads keys of one object and rejects the ones nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions()) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) fail(key(it.key()), "unknown key");
    }

    bool has(const std::string& k) const { return j_.contains(k); }
    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    const json* find(const std::string& k) {
        used_.insert(k);
        auto it = j_.find(k);
        return it == j_.end() ? nullptr : &*it;
    }

    template <class T> void get(const std::string& k, T& out) {
        const json* v = find(k);
        if (!v) return;
        try {
            out = v->get<T>();
        } catch (const json::exception&) {
            fail(key(k), "wrong type");
        }
    }
    void get_vec3(const std::string& k, Vec3& out) {
        std::vector<double> v;
        get(k, v);
        if (!find(k) || v.empty()) return;
        if (v.size() != 3) fail(key(k), "expected three numbers");
        out = Vec3(v[0], v[1], v[2]);
    }
    Section sub(const std::string& k) {
        static const json empty = json::object();
        const json* v = find(k);
        return Section(v ? *v : empty, key(k));
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

void read_box(Section s, Box& b) {
    s.get_vec3("lo", b.lo);
    s.get_vec3("hi", b.hi);
}

void read_potential(Section s, PotentialSpec& p) {
    s.get("type", p.type);
    s.get("value", p.value);
    s.get("amplitude", p.amplitude);
    s.get_vec3("center", p.center);
    s.get_vec3("widths", p.widths);
    s.get("cutoff", p.cutoff);
    s.get("path", p.path);
    static const std::set<std::string> types{"background", "constant", "gaussian", "file"};
    if (!types.count(p.type)) fail(s.key("type"), "unknown potential selector '" + p.type + "'");
    if (p.type == "file" && p.path.empty()) fail(s.key("path"), "file potential needs a path");
    if (p.type == "gaussian" && (p.widths.minCoeff() <= 0)) fail(s.key("widths"), "widths must be positive");
}

std::vector<double> read_ladder(Section& s, const std::string& k, std::vector<double> dflt) {
    const json* v = s.find(k);
    if (!v) return dflt;
    if (v->is_array()) {
        try {
            return v->get<std::vector<double>>();
        } catch (const json::exception&) {
            fail(s.key(k), "expected numbers");
        }
    }
    // {"lo", "hi", "count"}: logarithmic
    Section l(*v, s.key(k));
    double lo = 0, hi = 0;
    int count = 0;
    l.get("lo", lo);
    l.get("hi", hi);
    l.get("count", count);
    if (!(lo > 0) || !(hi >= lo) || count < 1) fail(s.key(k), "need 0 < lo <= hi and count >= 1");
    std::vector<double> out;
    for (int i = 0; i < count; ++i) out.push_back(count == 1 ? lo : lo * std::pow(hi / lo, double(i) / (count - 1)));
    return out;
}

ordered_json box_json(const Box& b) {
    return {{"lo", {b.lo[0], b.lo[1], b.lo[2]}}, {"hi", {b.hi[0], b.hi[1], b.hi[2]}}};
}

ordered_json potential_json(const PotentialSpec& p) {
    ordered_json j{{"type", p.type}};
    if (p.type == "constant") j["value"] = p.value;
    if (p.type == "gaussian") {
        j["amplitude"] = p.amplitude;
        j["center"] = {p.center[0], p.center[1], p.center[2]};
        j["widths"] = {p.widths[0], p.widths[1], p.widths[2]};
        j["cutoff"] = p.cutoff;
    }
    if (p.type == "file") j["path"] = p.path;
    return j;
}

} // namespace

Scenario parse_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // Locate the byte offset reported by the parser.
        size_t line = 1, col = 1;
        for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') ++line, col = 1;
            else ++col;
        }
        std::ostringstream os;
        os << "line " << line << ", column " << col << ": " << e.what();
        throw Error("cli_runner.parse", os.str());
    }

    Scenario s;
    {
        Section root(j, "");
        {
            Section g = root.sub("grid");
            g.get("dims", s.grid.dims);
            if (g.has("spacing")) {
                const json* v = g.find("spacing");
                if (v->is_number()) s.grid.spacing = Vec3::Constant(v->get<double>());
                else g.get_vec3("spacing", s.grid.spacing);
            } else if (g.has("extent")) {
                // Physical edge length of the cube lattice.
                double ext = 0;
                g.get("extent", ext);
                for (int a = 0; a < 3; ++a) s.grid.spacing[a] = ext / (s.grid.dims[a] - 1);
            }
            if (g.has("origin")) {
                s.grid.has_origin = true;
                g.get_vec3("origin", s.grid.origin);
            }
            g.get("omega_pad", s.grid.omega_pad);
            if (g.has("v")) read_box(g.sub("v"), s.grid.v);
            if (g.has("u1")) read_box(g.sub("u1"), s.grid.u1);
        }
        {
            Section m = root.sub("metric");
            m.get("type", s.metric);
            m.get("params", s.metric_params);
            static const std::set<std::string> metrics{"identity", "diag_x3sq", "cap"};
            if (!metrics.count(s.metric)) fail("metric.type", "unknown metric selector '" + s.metric + "'");
            size_t want = s.metric == "identity" ? 0 : s.metric == "diag_x3sq" ? 1 : 3;
            if (s.metric_params.size() != want)
                fail("metric.params", "expected " + std::to_string(want) + " parameters");
        }
        root.get("q_star", s.q_star);
        if (root.has("q1")) read_potential(root.sub("q1"), s.q1);
        if (root.has("q2")) read_potential(root.sub("q2"), s.q2);
        {
            Section w = root.sub("weight");
            w.get("t1", s.weight.t1);
            w.get("t2", s.weight.t2);
            w.get("d1", s.weight.d1);
            w.get("d2", s.weight.d2);
            w.get("k", s.weight.k);
            if (w.has("lambda")) {
                const json* v = w.find("lambda");
                if (v->is_string()) {
                    if (v->get<std::string>() != "auto") fail("weight.lambda", "a number or \"auto\"");
                    s.lambda_auto = true;
                } else {
                    w.get("lambda", s.weight.lambda);
                    s.lambda_auto = false;
                }
            }
            w.get("allow_band_truncation", s.allow_band_truncation);
        }
        {
            std::string mode = "simulation";
            root.get("mode", mode);
            if (mode == "simulation") s.mode = Mode::Simulation;
            else if (mode == "blind") s.mode = Mode::Blind;
            else fail("mode", "expected simulation or blind");
        }
        {
            Section c = root.sub("cgo");
            c.get("beta", s.beta);
            c.get("M", s.M);
            c.get("J", s.J);
            c.get("K", s.K);
            std::string kernel = "K";
            c.get("kernel", kernel);
            if (kernel != "K" && kernel != "H") fail("cgo.kernel", "expected K or H");
            s.use_k = kernel == "K";
            c.get("h_degree", s.h_degree);
            c.get("profile_center", s.profile_center);
            c.get("profile_t", s.profile_t);
            c.get("solve_tau", s.solve_tau);
            c.get("increment_tol", s.cgo.increment_tol);
            c.get("max_terms", s.cgo.max_terms);
            c.get("ratio_fail", s.cgo.ratio_fail);
            s.eps_ladder = read_ladder(c, "eps", s.eps_ladder);
        }
        {
            Section l = root.sub("ladders");
            s.tau_grid = read_ladder(l, "tau", {});
            s.t_ladder = read_ladder(l, "t", s.t_ladder);
            s.eta = read_ladder(l, "eta", s.eta);
            l.get("chi_a", s.chi_a);
            l.get("center_margin", s.center_margin);
        }
        {
            Section r = root.sub("reconstruction");
            r.get("level_tolerance", s.level_tolerance);
            r.get("mu", s.mu);
            r.get("profile", s.profile);
            if (s.profile != "deconvolution" && s.profile != "richardson")
                fail("reconstruction.profile", "expected deconvolution or richardson");
        }
        {
            Section c = root.sub("continuation");
            c.get("certificate", s.continuation.certificate);
            c.get("discrepancy", s.continuation.discrepancy);
            c.get("ladder", s.continuation.ladder);
        }
        {
            Section t = root.sub("trace");
            t.get("increment_tol", s.trace.increment_tol);
            t.get("max_terms", s.trace.max_terms);
            t.get("ratio_fail", s.trace.ratio_fail);
            t.get("dense_fallback", s.trace.dense_fallback);
        }
        root.get("selftest", s.selftest);
        root.get("out", s.out);
        root.get("workers", s.workers);
        root.get("seed", s.seed);
    }

    for (int a = 0; a < 3; ++a)
        if (s.grid.dims[a] < 4) fail("grid.dims", "need at least 4 nodes per axis");
    if (s.tau_grid.empty()) fail("ladders.tau", "a tau ladder is required");
    if (s.solve_tau < 0) s.solve_tau = *std::max_element(s.tau_grid.begin(), s.tau_grid.end());
    if (s.t_ladder.size() < 2) fail("ladders.t", "at least two concentration parameters");
    if (s.M < 1 || s.J < 0 || s.K < 0) fail("cgo", "M >= 1, J >= 0, K >= 0");
    if (s.workers < 1) fail("workers", "at least one worker");
    for (int c : s.selftest)
        if (c < 1 || c > 9) fail("selftest", "selftest runs criteria 1 to 9");
    s.resolved = resolve(s);
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cli_runner.scenario", "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

ordered_json resolve(const Scenario& s) {
    ordered_json j;
    Grid g = build_scenario_grid(s);
    j["grid"] = {{"dims", s.grid.dims},
                 {"spacing", {g.spacing[0], g.spacing[1], g.spacing[2]}},
                 {"origin", {g.origin[0], g.origin[1], g.origin[2]}},
                 {"omega_pad", g.omega_pad},
                 {"v", box_json(g.v_box)},
                 {"u1", box_json(g.u1_box)}};
    j["metric"] = {{"type", s.metric}, {"params", s.metric_params}};
    j["q_star"] = s.q_star;
    j["q1"] = potential_json(s.q1);
    j["q2"] = potential_json(s.q2);
    j["weight"] = {{"t1", s.weight.t1}, {"t2", s.weight.t2}, {"d1", s.weight.d1}, {"d2", s.weight.d2},
                   {"k", s.weight.k}};
    if (s.lambda_auto) j["weight"]["lambda"] = "auto";
    else j["weight"]["lambda"] = s.weight.lambda;
    j["weight"]["allow_band_truncation"] = s.allow_band_truncation;
    j["mode"] = s.mode == Mode::Simulation ? "simulation" : "blind";
    j["cgo"] = {{"beta", s.beta},
                {"M", s.M},
                {"J", s.J},
                {"K", s.K},
                {"kernel", s.use_k ? "K" : "H"},
                {"h_degree", s.h_degree},
                {"profile_center", s.profile_center},
                {"profile_t", s.profile_t},
                {"solve_tau", s.solve_tau},
                {"increment_tol", s.cgo.increment_tol},
                {"max_terms", s.cgo.max_terms},
                {"ratio_fail", s.cgo.ratio_fail},
                {"eps", s.eps_ladder}};
    j["ladders"] = {{"tau", s.tau_grid},
                    {"t", s.t_ladder},
                    {"eta", s.eta},
                    {"chi_a", s.chi_a},
                    {"center_margin", s.center_margin}};
    j["reconstruction"] = {{"K", s.K}, {"level_tolerance", s.level_tolerance}, {"mu", s.mu},
                           {"profile", s.profile}};
    j["continuation"] = {{"certificate", s.continuation.certificate},
                         {"discrepancy", s.continuation.discrepancy},
                         {"ladder", s.continuation.ladder}};
    j["trace"] = {{"increment_tol", s.trace.increment_tol},
                  {"max_terms", s.trace.max_terms},
                  {"ratio_fail", s.trace.ratio_fail},
                  {"dense_fallback", s.trace.dense_fallback}};
    j["selftest"] = s.selftest;
    j["out"] = s.out;
    j["workers"] = s.workers;
    j["seed"] = s.seed;
    return j;
}

Grid build_scenario_grid(const Scenario& s) { return build_grid(s.grid); }

MetricField build_scenario_metric(const Scenario& s, const Grid& g) {
    const auto& p = s.metric_params;
    if (s.metric == "diag_x3sq") return MetricField::from_function(g, metric_diag_x3sq(p[0]));
    if (s.metric == "cap") return MetricField::from_function(g, metric_cap(p[0], p[1], p[2]));
    return MetricField::identity(g);
}

RVec build_potential(const PotentialSpec& p, const Grid& g, double q_star) {
    if (p.type == "background") return RVec::Constant(g.size(), q_star);
    if (p.type == "constant") return RVec::Constant(g.size(), p.value);
    if (p.type == "file") return read_field_csv(p.path, g);
    const Box v = g.v_box;
    const Vec3 mid = 0.5 * (v.lo + v.hi), half = 0.5 * (v.hi - v.lo);
    return sample(g, [&](const Vec3& x) {
        double r2 = ((x - p.center).array() / p.widths.array()).square().sum();
        double bump = p.amplitude * std::exp(-r2);
        if (!p.cutoff) return q_star + bump;
        // (1 - s^4)^3 taper in the box norm of V; zero on and outside its faces.
        double s = ((x - mid).cwiseAbs().array() / half.array()).maxCoeff();
        return q_star + (s < 1 ? bump * std::pow(1 - std::pow(s, 4), 3) : 0.0);
    });
}

void build_weights(const Scenario& s, World& w) {
    WeightSpec spec = s.weight;
    validate_weight_spec(w.grid, spec, s.allow_band_truncation);
    OmegaFields om = build_omega(w.grid);
    if (s.lambda_auto) {
        w.lambda_search = choose_lambda(w.grid, w.metric, spec, lattice_interior_nodes(w.grid));
        spec.lambda = w.lambda_search.lambda;
    } else {
        w.lambda_search.lambda = spec.lambda;
    }
    spec.sign = 1;
    w.phi = build_weight(w.grid, w.metric, spec, om);
    spec.sign = -1;
    w.psi = build_weight(w.grid, w.metric, spec, om);
}

World build_world(const Scenario& s, bool with_dn) {
    World w{build_scenario_grid(s), {}, {}, {}, {}, {}, {}, {}, {}, {}};
    w.metric = build_scenario_metric(s, w.grid);
    w.q_star = RVec::Constant(w.grid.size(), s.q_star);
    w.q1 = build_potential(s.q1, w.grid, s.q_star);
    w.q2 = build_potential(s.q2, w.grid, s.q_star);
    build_weights(s, w);
    if (with_dn) {
        w.dn1 = ForwardSolver(w.grid, w.metric, w.q1, s.workers).assemble_dn();
        w.dn2 = ForwardSolver(w.grid, w.metric, w.q2, s.workers).assemble_dn();
    }
    return w;
}

PipelineContext make_context(const Scenario& s, const World& w) {
    PipelineContext c;
    c.grid = &w.grid;
    c.metric = &w.metric;
    c.phi = &w.phi;
    c.psi = &w.psi;
    c.q_star = w.q_star;
    c.J = s.J;
    c.M = s.M;
    c.use_k = s.use_k;
    c.gamma.continuation = s.continuation;
    c.trace = s.trace;
    return c;
}

ExtractionConfig make_extraction(const Scenario& s, const Grid& g) {
    ExtractionConfig e;
    e.K = s.K;
    e.J = s.J;
    e.M = s.M;
    e.beta = s.beta;
    e.tau_grid = s.tau_grid;
    e.t_ladder = s.t_ladder;
    e.chi_a = s.chi_a;
    e.eta = s.eta;
    double m = s.center_margin * g.spacing[2] + 1e-9;
    e.center_planes = g.planes_in(g.v_box.lo[2] - m, g.v_box.hi[2] + m);
    e.level_tolerance = s.level_tolerance;
    e.profile = s.profile == "richardson" ? ExtractionConfig::Profile::Richardson
                                           : ExtractionConfig::Profile::Deconvolution;
    return e;
}

std::vector<double> tau_ladder(const Scenario& s) { return s.tau_grid; }

} // namespace eucgo
