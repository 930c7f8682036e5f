#include "paglab/autodiff.hpp"

#include "paglab/mlp.hpp"
#include "paglab/rng.hpp"
#include "fd_check.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace paglab;
using test::max_rel_err;
using test::rel_err;
using test::tape_finite_difference;

TEST_CASE("forward: elementwise add") {
    Tape tape;
    NodeId a = tape.leaf("a", Tensor({2}, {1.0, 2.0}), false);
    NodeId b = tape.leaf("b", Tensor({2}, {10.0, -3.0}), false);
    tape.add(a, b);
    Tensor out = tape.forward({{"a", Tensor({2}, {1.0, 2.0})}, {"b", Tensor({2}, {10.0, -3.0})}});
    CHECK(out[0] == 11.0);
    CHECK(out[1] == -1.0);
}

TEST_CASE("forward: relu") {
    Tape tape;
    NodeId x = tape.leaf("x", Tensor({3}, {-1.0, 0.0, 3.0}), false);
    NodeId r = tape.relu(x);
    CHECK(tape.value(r)[0] == 0.0);
    CHECK(tape.value(r)[1] == 0.0);
    CHECK(tape.value(r)[2] == 3.0);
}

TEST_CASE("forward: identity matmul") {
    Tape tape;
    NodeId eye = tape.leaf("I", Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}), false);
    NodeId v = tape.leaf("v", Tensor({2}, {3.5, -2.25}), false);
    NodeId out = tape.matmul(eye, v);
    CHECK(tape.value(out)[0] == 3.5);
    CHECK(tape.value(out)[1] == -2.25);
}

TEST_CASE("forward: replay is bitwise deterministic") {
    Tape tape;
    Tensor xv({3}, {0.3, -1.2, 2.0});
    NodeId x = tape.leaf("x", xv, true);
    NodeId y = tape.log_sum_exp(tape.relu(tape.scale(x, 1.7)));
    const double first = tape.value(y).item();
    tape.forward({{"x", xv}});
    CHECK(tape.value(y).item() == first);
}

TEST_CASE("grad: d(x.x)/dx at 3 is 6") {
    Tape tape;
    NodeId x = tape.leaf("x", Tensor({1}, {3.0}), true);
    NodeId f = tape.dot(x, x);
    const NodeId wrt[] = {x};
    Tensor g = tape.gradients(f, wrt)[0];
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("grad: constant output gives a zero tensor") {
    Tape tape;
    NodeId x = tape.leaf("x", Tensor({3}, {1.0, 2.0, 3.0}), true);
    NodeId c = tape.constant(Tensor::scalar(7.0));
    NodeId out = tape.sum(c);
    const NodeId wrt[] = {x};
    Tensor g = tape.gradients(out, wrt)[0];
    REQUIRE(g.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("relu backward convention: mask and second derivative") {
    Tensor mask = relu_backward_mask(Tensor({3}, {-2.0, 0.0, 5.0}));
    CHECK(mask[0] == 0.0);
    CHECK(mask[1] == 0.0); // subgradient at the kink fixed to 0
    CHECK(mask[2] == 1.0);

    // mask applied to upstream ones
    Tape tape;
    NodeId pre = tape.leaf("pre", Tensor({3}, {-2.0, 0.0, 5.0}), true);
    NodeId out = tape.sum(tape.relu(pre));
    const NodeId wrt[] = {pre};
    Tensor g = tape.gradients(out, wrt)[0];
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 1.0);
}

TEST_CASE("double backprop through relu(x)^2 matches finite differences") {
    Tape tape;
    NodeId x = tape.leaf("x", Tensor({1}, {2.0}), true);
    NodeId r = tape.relu(x);
    NodeId f = tape.dot(r, r);
    const NodeId wrt[] = {x};
    NodeId g = tape.gradients_recorded(f, wrt)[0];
    NodeId g_scalar = tape.sum(g);
    CHECK(tape.value(g_scalar).item() == doctest::Approx(4.0));

    Tensor analytic = tape.gradients(g_scalar, wrt)[0];
    Tensor oracle = tape_finite_difference(tape, g_scalar, x);
    CHECK(max_rel_err(analytic, oracle) <= 1e-3);
    CHECK(analytic[0] == doctest::Approx(2.0)); // d2(x^2)/dx2 on the active branch
}

TEST_CASE("second-order dW of df/dx for f = sum(relu(Wx)) matches finite differences") {
    std::mt19937_64 rng(7);
    Tape tape;
    Tensor wv({4, 3});
    for (std::size_t i = 0; i < wv.size(); ++i) wv[i] = uniform_range(rng, -1.0, 1.0);
    Tensor xv({3});
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = uniform_range(rng, 0.5, 1.5);

    NodeId w = tape.leaf("w", wv, true);
    NodeId x = tape.leaf("x", xv, true);
    NodeId f = tape.sum(tape.relu(tape.matmul(w, x)));

    // scalar probe of the input-gradient, so the oracle stays scalar-valued
    const NodeId wrt_x[] = {x};
    NodeId input_grad = tape.gradients_recorded(f, wrt_x)[0];
    NodeId probe = tape.constant(Tensor({3}, {0.3, -1.1, 0.7}));
    NodeId s = tape.dot(input_grad, probe);

    const NodeId wrt_w[] = {w};
    Tensor analytic = tape.gradients(s, wrt_w)[0];
    Tensor oracle = tape_finite_difference(tape, s, w);
    CHECK(max_rel_err(analytic, oracle) <= 1e-3);
}

TEST_CASE("create-graph: parameter gradient of |grad_x f|^2 on a 2-4-2 mlp matches finite differences") {
    MlpModel model = init_mlp({2, 4, 2}, 11);
    Tape tape;
    ModelNodes nodes = record_mlp(tape, model, Tensor({2}, {0.8, -0.45}));
    NodeId z0 = tape.index_select(nodes.logits, 0);
    const NodeId wrt_x[] = {nodes.input};
    NodeId g = tape.gradients_recorded(z0, wrt_x)[0];
    NodeId s = tape.dot(g, g);

    for (NodeId p : nodes.parameter_nodes()) {
        const NodeId wrt[] = {p};
        Tensor analytic = tape.gradients(s, wrt)[0];
        Tensor oracle = tape_finite_difference(tape, s, p);
        CHECK(max_rel_err(analytic, oracle) <= 1e-3);
    }
}

TEST_CASE("first-order gradients match finite differences on 100 random graphs") {
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        std::mt19937_64 rng(mix_seed(42, trial));
        const std::size_t n = 2 + trial % 4;
        const std::size_t m = 2 + (trial / 4) % 3;

        Tensor wv({m, n});
        Tensor xv({n});
        Tensor uv({m});
        // keep relu pre-activations away from the kink so central differences
        // with step 1e-4 see a smooth function
        bool ok = false;
        while (!ok) {
            for (std::size_t i = 0; i < wv.size(); ++i) wv[i] = uniform_range(rng, -1.5, 1.5);
            for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = uniform_range(rng, -1.0, 1.0);
            for (std::size_t i = 0; i < uv.size(); ++i) uv[i] = uniform_range(rng, -1.0, 1.0);
            ok = true;
            for (std::size_t i = 0; i < m; ++i) {
                double acc = 0.0;
                for (std::size_t k = 0; k < n; ++k) acc += wv[i * n + k] * xv[k];
                if (std::abs(acc) < 1e-2) ok = false;
            }
        }

        Tape tape;
        NodeId w = tape.leaf("w", wv, true);
        NodeId x = tape.leaf("x", xv, true);
        NodeId u = tape.leaf("u", uv, true);
        NodeId h = tape.relu(tape.matmul(w, x));
        NodeId lse = tape.log_sum_exp(h);
        NodeId quotient = tape.div(tape.dot(h, u), tape.max_with_const(tape.norm(h), 1e-3));
        NodeId blend = tape.add(lse, tape.scale(quotient, uniform_range(rng, 0.2, 1.0)));
        NodeId out = tape.add(blend, tape.exp(tape.scale(tape.norm(u), -0.5)));

        for (NodeId leaf : {w, x, u}) {
            const NodeId wrt[] = {leaf};
            Tensor analytic = tape.gradients(out, wrt)[0];
            Tensor oracle = tape_finite_difference(tape, out, leaf);
            CHECK(max_rel_err(analytic, oracle) <= 1e-3);
        }
    }
}

TEST_CASE("structural ops differentiate correctly") {
    Tape tape;
    Tensor av({2, 3}, {1.0, -2.0, 0.5, 3.0, 0.25, -1.0});
    NodeId a = tape.leaf("a", av, true);
    NodeId t = tape.transpose(a);
    NodeId r = tape.reshape(t, {6});
    NodeId c = tape.constant(Tensor({6}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}));
    NodeId out = tape.dot(r, c);
    const NodeId wrt[] = {a};
    Tensor analytic = tape.gradients(out, wrt)[0];
    Tensor oracle = tape_finite_difference(tape, out, a);
    CHECK(max_rel_err(analytic, oracle) <= 1e-6);

    Tape tape2;
    NodeId z = tape2.leaf("z", Tensor({4}, {0.1, 0.2, 0.3, 0.4}), true);
    NodeId pick = tape2.index_select(z, 2);
    const NodeId wrt2[] = {z};
    Tensor g = tape2.gradients(pick, wrt2)[0];
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 1.0);
    CHECK(g[3] == 0.0);
}

TEST_CASE("log_sum_exp is stable for large logits") {
    Tape tape;
    NodeId z = tape.leaf("z", Tensor({2}, {1000.0, 0.0}), true);
    NodeId out = tape.log_sum_exp(z);
    CHECK(tape.value(out).item() == doctest::Approx(1000.0));
    const NodeId wrt[] = {z};
    Tensor g = tape.gradients(out, wrt)[0];
    CHECK(g[0] == doctest::Approx(1.0));
    CHECK(g[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(g[0]));
}

TEST_CASE("gradients are bitwise deterministic across runs") {
    auto build_and_grad = [] {
        std::mt19937_64 rng(99);
        Tensor wv({3, 3});
        for (std::size_t i = 0; i < wv.size(); ++i) wv[i] = uniform_range(rng, -1.0, 1.0);
        Tensor xv({3});
        for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = uniform_range(rng, -1.0, 1.0);
        Tape tape;
        NodeId w = tape.leaf("w", wv, true);
        NodeId x = tape.leaf("x", xv, true);
        NodeId out = tape.log_sum_exp(tape.relu(tape.matmul(w, x)));
        const NodeId wrt[] = {w, x};
        return tape.gradients(out, wrt);
    };
    auto g1 = build_and_grad();
    auto g2 = build_and_grad();
    for (std::size_t t = 0; t < g1.size(); ++t) {
        for (std::size_t i = 0; i < g1[t].size(); ++i) CHECK(g1[t][i] == g2[t][i]);
    }
}

TEST_CASE("grad is linear in the output") {
    std::mt19937_64 rng(5);
    Tensor xv({4});
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = uniform_range(rng, 0.2, 2.0);
    const double a = 1.75;
    const double b = -0.5;

    Tape tape;
    NodeId x = tape.leaf("x", xv, true);
    NodeId f = tape.log_sum_exp(x);
    NodeId g = tape.norm(x);
    NodeId combo = tape.add(tape.scale(f, a), tape.scale(g, b));
    const NodeId wrt[] = {x};
    Tensor grad_combo = tape.gradients(combo, wrt)[0];
    Tensor grad_f = tape.gradients(f, wrt)[0];
    Tensor grad_g = tape.gradients(g, wrt)[0];
    for (std::size_t i = 0; i < xv.size(); ++i) {
        CHECK(rel_err(grad_combo[i], a * grad_f[i] + b * grad_g[i]) <= 1e-12);
    }
}

TEST_CASE("errors name the op and shapes") {
    Tape tape;
    NodeId a = tape.leaf("a", Tensor({2}, {1.0, 2.0}), false);
    NodeId b = tape.leaf("b", Tensor({3}, {1.0, 2.0, 3.0}), false);
    CHECK_THROWS_WITH_AS(tape.add(a, b), "add: shape mismatch [2] vs [3]", std::invalid_argument);
    CHECK_THROWS_AS(tape.matmul(a, b), std::invalid_argument);

    NodeId v = tape.add(a, a);
    const NodeId wrt[] = {a};
    CHECK_THROWS_AS(tape.gradients(v, wrt), std::invalid_argument); // non-scalar output

    NodeId s = tape.sum(v);
    const NodeId not_leaf[] = {v};
    CHECK_THROWS_AS(tape.gradients(s, not_leaf), std::invalid_argument);
    const NodeId off_tape[] = {NodeId{10000}};
    CHECK_THROWS_AS(tape.gradients(s, off_tape), std::invalid_argument);
}

TEST_CASE("forward rejects unbound and unknown leaves") {
    Tape tape;
    tape.leaf("a", Tensor::scalar(1.0), false);
    tape.leaf("b", Tensor::scalar(2.0), false);
    tape.add(tape.leaf_id("a"), tape.leaf_id("b"));
    CHECK_THROWS_AS(tape.forward({{"a", Tensor::scalar(1.0)}}), std::invalid_argument);
    CHECK_THROWS_AS(tape.forward({{"a", Tensor::scalar(1.0)},
                                  {"b", Tensor::scalar(2.0)},
                                  {"zz", Tensor::scalar(3.0)}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(tape.set_leaf("a", Tensor({2}, {1.0, 2.0})), std::invalid_argument);
}
