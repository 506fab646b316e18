#include <doctest.h>

#include <cmath>

#include "rcq/loss.hpp"
#include "rcq/oracle.hpp"
#include "rcq/stats.hpp"

using namespace rcq;

TEST_SUITE_BEGIN("loss");

namespace {

// access whose forward density does not depend on the start point at all
TransitionAccess equilibrated_access() {
    const TorusKernel k(TorusKernelSpec{2, 30.0, SigmaParam::finite(30.0)});
    // at this lag every series coefficient underflows: the kernel is exactly uniform
    TransitionAccess acc = make_torus_access(k, 64);
    return acc;
}

} // namespace

TEST_CASE("integrand vanishes for an equilibrated kernel") {
    const TransitionAccess acc = equilibrated_access();
    const ReactionCoordinate rc = linear_rc_alpha(0.4);
    LossQuadConfig quad;
    quad.seed = 1;
    RngStream rng(2);
    CHECK(integrand_f({0.3, -0.6}, rc, acc, quad, rng) == 0.0);
}

TEST_CASE("limit kernel with the optimal coordinate gives exactly zero loss") {
    const TorusKernel k(TorusKernelSpec{2, 1.0, SigmaParam::infinity()});
    const TransitionAccess acc = make_torus_access(k, 64);
    const ReactionCoordinate rc = linear_rc_alpha(0.0);
    LossQuadConfig quad;
    quad.seed = 3;
    const StationarySampler sampler = uniform_box_sampler(Box::cube(2, -pi, pi));
    const LossEstimate deflat = loss_deflat(rc, acc, sampler, quad);
    CHECK(deflat.value == 0.0);
    CHECK(deflat.std_error == 0.0);
    const LossEstimate lump = loss_lump_differential(rc, acc, quad);
    CHECK(lump.value == 0.0);
    const LossEstimate cons = loss_lump_constructive(rc, acc, quad);
    CHECK(cons.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("estimators agree with the exact sums on a discretized kernel") {
    // 8 cells per axis, labels = first-axis cells; the stand-in makes every
    // continuous estimator comparable with an exact finite sum
    const TorusKernelSpec spec{2, 1.0, SigmaParam::finite(2.0)};
    const DiscreteChain chain = discretize_torus_kernel(spec, 8);
    const ExactLosses exact = exact_losses(chain);
    const TransitionAccess acc = make_chain_access(chain, 32);
    const ReactionCoordinate rc = linear_rc_alpha(0.0);
    const StationarySampler sampler = uniform_box_sampler(Box::cube(2, -pi, pi));

    SUBCASE("pointwise integrand matches the exact per-state value") {
        const ExactIntegrand fx = exact_f_and_variance(chain);
        LossQuadConfig quad;
        quad.n_z = 64; // multiple of the label count: the level grid is exact
        quad.n_level = 80;
        quad.n_pairs = 2048;
        quad.seed = 4;
        const GridSpec cells = *chain.cell_geometry;
        for (int state : {9, 36}) {
            Vec x(2);
            x[0] = cells.node_coord(0, state / 8);
            x[1] = cells.node_coord(1, state % 8);
            RngStream rng = RngStream::from_path(11, {static_cast<std::uint64_t>(state)});
            const double est = integrand_f(x, rc, acc, quad, rng);
            CHECK(est == doctest::Approx(fx.f(state)).epsilon(0.02));
        }
    }
    SUBCASE("observable-side differential loss") {
        LossQuadConfig quad;
        quad.n_z = 32;
        quad.n_level = 32;
        quad.n_pairs = 48;
        quad.m_outer = 600;
        quad.seed = 5;
        const LossEstimate est = loss_deflat(rc, acc, sampler, quad);
        CHECK(est.value == doctest::Approx(exact.deflat_differential).epsilon(0.05));
    }
    SUBCASE("density-side differential loss") {
        LossQuadConfig quad;
        quad.n_z = 32;
        quad.n_level = 24;
        quad.n_pairs = 64;
        quad.seed = 6;
        const LossEstimate est = loss_lump_differential(rc, acc, quad);
        CHECK(est.value == doctest::Approx(exact.lump_differential).epsilon(0.05));
    }
    SUBCASE("constructive losses") {
        LossQuadConfig quad;
        quad.n_z = 32;
        quad.n_level = 256;
        quad.m_outer = 600;
        quad.seed = 7;
        const LossEstimate lump = loss_lump_constructive(rc, acc, quad);
        CHECK(lump.value == doctest::Approx(exact.lump_constructive).epsilon(0.05));
        const LossEstimate deflat = loss_deflat_constructive(rc, acc, sampler, quad);
        CHECK(deflat.value == doctest::Approx(exact.deflat_constructive).epsilon(0.05));
    }
}

TEST_CASE("sandwich between constructive and differential losses on a smooth kernel") {
    const TorusKernel k(TorusKernelSpec{2, 1.0, SigmaParam::finite(2.0)});
    const TransitionAccess acc = make_torus_access(k, 96);
    const ReactionCoordinate rc = linear_rc_alpha(0.35);
    const StationarySampler sampler = uniform_box_sampler(Box::cube(2, -pi, pi));
    LossQuadConfig quad;
    quad.n_z = 15;
    quad.n_level = 48;
    quad.n_pairs = 64;
    quad.m_outer = 220;
    quad.seed = 8;
    const LossEstimate lt_l = loss_lump_differential(rc, acc, quad);
    const LossEstimate lh_l = loss_lump_constructive(rc, acc, quad);
    const LossEstimate lt_d = loss_deflat(rc, acc, sampler, quad);
    const LossEstimate lh_d = loss_deflat_constructive(rc, acc, sampler, quad);
    auto se = [](const LossEstimate& a, const LossEstimate& b) {
        return 3.0 * std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
    };
    CHECK(lh_l.value <= lt_l.value + se(lh_l, lt_l));
    CHECK(lt_l.value <= 2.0 * lh_l.value + se(lt_l, lh_l));
    CHECK(lh_d.value <= lt_d.value + se(lh_d, lt_d));
    CHECK(lt_d.value <= 2.0 * lh_d.value + se(lt_d, lh_d));
    // global bound: the pairwise distance between probability densities is at most 2
    for (const LossEstimate* est : {&lt_l, &lh_l, &lt_d, &lh_d}) {
        CHECK(est->value >= 0.0);
        CHECK(est->value <= 2.0 + 2.0 * est->std_error);
    }
}

TEST_CASE("seed determinism") {
    const TorusKernel k(TorusKernelSpec{2, 1.0, SigmaParam::finite(2.0)});
    const TransitionAccess acc = make_torus_access(k, 64);
    const ReactionCoordinate rc = linear_rc_alpha(0.2);
    const StationarySampler sampler = uniform_box_sampler(Box::cube(2, -pi, pi));
    LossQuadConfig quad;
    quad.m_outer = 16;
    quad.seed = 99;
    const LossEstimate a = loss_deflat(rc, acc, sampler, quad);
    const LossEstimate b = loss_deflat(rc, acc, sampler, quad);
    CHECK(a.value == b.value); // bitwise
    CHECK(a.per_sample_f == b.per_sample_f);
    quad.seed = 100;
    const LossEstimate c = loss_deflat(rc, acc, sampler, quad);
    CHECK(a.value != c.value);
    // thread count must not change the result
    quad.seed = 99;
    quad.threads = 4;
    const LossEstimate d = loss_deflat(rc, acc, sampler, quad);
    CHECK(a.value == d.value);
    CHECK(a.per_sample_f == d.per_sample_f);
}

TEST_CASE("variance report") {
    LossEstimate est;
    est.per_sample_f = {2.0, 2.0, 2.0, 2.0};
    est.m = 4;
    const VarianceReport r = variance_of_f(est);
    CHECK(r.variance == 0.0);
    CHECK(r.mean_f == doctest::Approx(2.0));
    LossEstimate tiny;
    tiny.per_sample_f = {1.0};
    CHECK_THROWS_AS(variance_of_f(tiny), numeric_error);
}

TEST_CASE("pair budget validation") {
    LossQuadConfig quad;
    quad.n_level = 8;
    quad.n_pairs = 28; // exactly C(8,2)
    CHECK_NOTHROW(quad.validate());
    quad.n_pairs = 29;
    CHECK_THROWS_AS(quad.validate(), config_error);
}

TEST_CASE("error curve on an equilibrated kernel is identically zero") {
    // ratio(x, .) is constant, so every pair difference vanishes and the
    // integrand is the deterministic constant 0 for all samples and trials
    const TransitionAccess acc = equilibrated_access();
    const ReactionCoordinate rc = linear_rc_sum(2);
    const StationarySampler sampler = uniform_box_sampler(Box::cube(2, -pi, pi));
    LossQuadConfig inner;
    inner.n_z = 5;
    inner.n_level = 8;
    inner.n_pairs = 8;
    const McErrorCurve curve = mc_error_curve(rc, acc, sampler, {4, 16}, 5, 3, inner, 10);
    CHECK(curve.reference == 0.0);
    for (const auto& pt : curve.points) CHECK(pt.rel_expected_error == 0.0);
}

TEST_CASE("error curve decreases with the sample count") {
    const TorusKernel k(TorusKernelSpec{2, 1.0, SigmaParam::finite(2.0)});
    const TransitionAccess acc = make_torus_access(k, 64);
    const ReactionCoordinate rc = linear_rc_sum(2);
    const StationarySampler sampler = uniform_box_sampler(Box::cube(2, -pi, pi));
    LossQuadConfig inner;
    inner.n_z = 9;
    inner.n_level = 12;
    inner.n_pairs = 10;
    const McErrorCurve curve = mc_error_curve(rc, acc, sampler, {8, 64}, 12, 5, inner, 50);
    REQUIRE(curve.points.size() == 2);
    CHECK(curve.points[1].rel_expected_error < curve.points[0].rel_expected_error);
    CHECK(curve.reference > 0.0);
}

TEST_SUITE_END();
