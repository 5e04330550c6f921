#include "eucgo/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace eucgo {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_context(const PipelineContext& ctx) {
    if (!ctx.grid || !ctx.metric || !ctx.phi || !ctx.psi)
        throw Error("cli_runner.dependency", "pipeline context is incomplete");
    if (ctx.q_star.size() != ctx.grid->size())
        throw Error("cli_runner.dependency", "q* does not match the grid");
}

// Common log scale for a family so that one exponential rescales the pairing.
TraceBatch collect(const std::vector<CGOSolution>& sols, int n) {
    TraceBatch t;
    t.log_scale = -1e300;
    for (const auto& s : sols) t.log_scale = std::max(t.log_scale, s.trace_log_scale);
    t.traces.resize(n, static_cast<int>(sols.size()));
    for (size_t c = 0; c < sols.size(); ++c)
        t.traces.col(c) = sols[c].trace * std::exp(sols[c].trace_log_scale - t.log_scale);
    return t;
}

void record(TauDiagnostics& d, const std::vector<CGOSolution>& sols, const CMat& amps,
            const ConjugatedOperator& op, int family) {
    int terms = 0;
    double rem = 0, res = 0;
    for (size_t c = 0; c < sols.size(); ++c) {
        terms = std::max(terms, sols[c].terms);
        double v = op.norm(CVec(amps.col(c)));
        if (v > 0) rem = std::max(rem, sols[c].remainder_norm / v);
        res = std::max(res, sols[c].residual);
    }
    double contraction = sols.empty() ? 0 : sols[0].contraction;
    if (family == 1) {
        d.cgo_terms_1 = terms, d.remainder_1 = rem, d.contraction_1 = contraction;
    } else {
        d.cgo_terms_2 = terms, d.remainder_2 = rem, d.contraction_2 = contraction;
    }
    d.cgo_residual = std::max(d.cgo_residual, res);
}

struct Families {
    TraceBatch t1, t2;
};

// CGO solves of both families at one tau; q1 serves the phi family and q2 the
// psi family.
Families solve_families(const PipelineContext& ctx, const TauKernels& tk, const RVec& q1, const RVec& q2,
                        const CMat& amps, double eps, TauDiagnostics& d) {
    auto [Phi, Psi] = phase_global(*ctx.phi, *ctx.psi, eps);
    const int nb = static_cast<int>(ctx.grid->boundary_nodes.size());
    CGOSolveOptions o;
    o.kernel_norm = estimate_norm(tk.kern_phi, 60, 1).norm;
    auto u1 = solve_cgo_batch(tk.kern_phi, *ctx.metric, q1, ctx.q_star, Phi.values, amps, eps,
                              static_cast<int>(PhaseKind::GlobalPhi), o);
    o.kernel_norm = estimate_norm(tk.kern_psi, 60, 1).norm;
    auto u2 = solve_cgo_batch(tk.kern_psi, *ctx.metric, q2, ctx.q_star, Psi.values, amps, eps,
                              static_cast<int>(PhaseKind::GlobalPsi), o);
    record(d, u1, amps, *tk.p_phi, 1);
    record(d, u2, amps, *tk.p_psi, 2);
    return {collect(u1, nb), collect(u2, nb)};
}

} // namespace

TauKernels::TauKernels(const PipelineContext& ctx, double tau_) : tau(tau_) {
    require_context(ctx);
    p_phi = std::make_unique<ConjugatedOperator>(*ctx.grid, *ctx.metric, ctx.phi->phi, tau, ctx.q_star,
                                                 Direction::Forward);
    p_psi = std::make_unique<ConjugatedOperator>(*ctx.grid, *ctx.metric, ctx.psi->phi, tau, ctx.q_star,
                                                 Direction::Mirror);
    if (ctx.use_k) {
        k_phi = std::make_unique<KOperator>(*p_phi, *p_psi);
        k_psi = std::make_unique<KOperator>(*p_psi, *p_phi);
        kern_phi.k = k_phi.get();
        kern_psi.k = k_psi.get();
    } else {
        kern_phi.right = p_phi.get();
        kern_psi.right = p_psi.get();
    }
}

CMat sample_amplitudes(const PipelineContext& ctx, const std::vector<ProfileChi>& chis, double eps) {
    CMat A(ctx.grid->size(), static_cast<int>(chis.size()) * (ctx.J + 1));
    for (size_t p = 0; p < chis.size(); ++p)
        for (int l = 0; l <= ctx.J; ++l)
            A.col(p * (ctx.J + 1) + l) =
                amplitude_build(HolomorphicDatum::monomial(l), chis[p], ctx.M).sample(*ctx.grid, eps);
    return A;
}

std::vector<Eigen::MatrixXcd> pair_traces(const DNMatrix& dn1, const DNMatrix& dn2, const TraceBatch& t1,
                                          const TraceBatch& t2, int profiles, int J) {
    if (dn1.dims != dn2.dims || dn1.schur.rows() != dn2.schur.rows())
        throw Error("schrodinger_forward.dimension", "DN matrices live on different grids");
    const Eigen::MatrixXcd d = (dn2.schur - dn1.schur).cast<cplx>();
    const Eigen::MatrixXcd dt2 = d * t2.traces;
    const cplx scale = std::exp(t1.log_scale + t2.log_scale);
    std::vector<Eigen::MatrixXcd> out;
    for (int p = 0; p < profiles; ++p) {
        const int c0 = p * (J + 1);
        out.push_back(scale * (t1.traces.middleCols(c0, J + 1).transpose() * dt2.middleCols(c0, J + 1)));
    }
    return out;
}

PairingBatchProvider make_simulation_provider(const PipelineContext& ctx, const RVec& q1, const RVec& q2,
                                              const DNMatrix& dn1, const DNMatrix& dn2,
                                              std::vector<TauDiagnostics>* diag) {
    require_context(ctx);
    return [&ctx, q1, q2, &dn1, &dn2, diag](double tau, double eps, const std::vector<ProfileChi>& chis) {
        auto t0 = std::chrono::steady_clock::now();
        TauDiagnostics d;
        d.tau = tau, d.eps = eps;
        TauKernels tk(ctx, tau);
        CMat amps = sample_amplitudes(ctx, chis, eps);
        Families f = solve_families(ctx, tk, q1, q2, amps, eps, d);
        auto out = pair_traces(dn1, dn2, f.t1, f.t2, static_cast<int>(chis.size()), ctx.J);
        d.seconds = seconds_since(t0);
        if (diag) diag->push_back(d);
        return out;
    };
}

std::vector<TraceSolution> blind_traces(const PipelineContext& ctx, const Kernel& kern, const DNMatrix& dn,
                                        const CMat& u0) {
    GreenKernel G(kern);
    BlindGamma gamma(*ctx.grid, *ctx.metric, ctx.q_star, G, dn, ctx.gamma);
    // The first application fixes the regularization for the whole series.
    gamma.apply_batch(u0);
    gamma.freeze_alpha();
    return solve_trace_equations([&gamma](const CMat& f) { return gamma.apply_batch(f); }, u0, ctx.trace);
}

PairingBatchProvider make_blind_provider(const PipelineContext& ctx, const DNMatrix& dn1, const DNMatrix& dn2,
                                         std::vector<TauDiagnostics>* diag) {
    require_context(ctx);
    return [&ctx, &dn1, &dn2, diag](double tau, double eps, const std::vector<ProfileChi>& chis) {
        auto t0 = std::chrono::steady_clock::now();
        TauDiagnostics d;
        d.tau = tau, d.eps = eps;
        TauKernels tk(ctx, tau);
        CMat amps = sample_amplitudes(ctx, chis, eps);
        // Background CGOs carry no information about q; their traces feed the
        // trace equations of Lambda_1 and Lambda_2.
        Families f = solve_families(ctx, tk, ctx.q_star, ctx.q_star, amps, eps, d);
        int worst_terms = 0;
        double worst_res = 0, worst_rho = 0;
        bool dense = false;
        auto resolve = [&](const Kernel& kern, const DNMatrix& dn, TraceBatch& t) {
            auto sols = blind_traces(ctx, kern, dn, t.traces);
            for (size_t c = 0; c < sols.size(); ++c) {
                t.traces.col(c) = sols[c].trace;
                worst_terms = std::max(worst_terms, sols[c].terms);
                worst_res = std::max(worst_res, sols[c].residual);
                worst_rho = std::max(worst_rho, sols[c].spectral_radius);
                dense = dense || sols[c].dense;
            }
        };
        resolve(tk.kern_phi, dn1, f.t1);
        resolve(tk.kern_psi, dn2, f.t2);
        d.trace_terms = worst_terms, d.trace_residual = worst_res, d.spectral_radius = worst_rho;
        d.dense = dense;
        auto out = pair_traces(dn1, dn2, f.t1, f.t2, static_cast<int>(chis.size()), ctx.J);
        d.seconds = seconds_since(t0);
        if (diag) diag->push_back(d);
        return out;
    };
}

ReconstructionResult reconstruct_difference(const PairingBatchProvider& provider, const Grid& grid,
                                            const ReconstructionConfig& cfg) {
    ReconstructionResult r;
    r.extraction = extract_plane_moments_batch(provider, grid, cfg.extraction);
    std::vector<RVec> fields;
    for (size_t p = 0; p < cfg.extraction.center_planes.size(); ++p) {
        r.planes.push_back(make_plane(grid, cfg.extraction.center_planes[p], cfg.window));
        r.fits.push_back(invert_moments(r.extraction.table, static_cast<int>(p), r.planes.back(), cfg.window,
                                        cfg.mu));
        fields.push_back(r.fits.back().values);
    }
    r.q = stack_planes(grid, r.planes, fields, RVec::Zero(grid.size()), grid.v_box);
    return r;
}

} // namespace eucgo
