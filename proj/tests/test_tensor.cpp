#include <doctest.h>

#include <cmath>
#include <vector>

#include "univip/gradcheck.hpp"
#include "univip/rng.hpp"
#include "univip/tensor.hpp"

using namespace univip;

// ============================================================================
// helpers
// ============================================================================

// Random tensor with entries bounded away from zero, so ops with kinks at
// the origin (relu) stay differentiable at every probe point.
static Tensor rand_tensor(Shape shape, Rng& rng, bool requires_grad = true,
                          double lo = 0.2, double hi = 1.5) {
    std::vector<double> d(shape_numel(shape));
    for (double& v : d) {
        double mag = rng.uniform(lo, hi);
        v = rng.bernoulli(0.5) ? mag : -mag;
    }
    return Tensor::from_data(std::move(shape), std::move(d), requires_grad);
}

// Reference convolution, written independently of the production kernel:
// plain output-centric loops with an explicit padding bounds check.
static std::vector<double> conv_ref(const std::vector<double>& x, size_t B, size_t C, size_t H,
                                    size_t W, const std::vector<double>& w, size_t F, size_t KH,
                                    size_t KW, size_t s, size_t p, size_t OH, size_t OW) {
    std::vector<double> out(B * F * OH * OW, 0.0);
    for (size_t b = 0; b < B; ++b)
        for (size_t f = 0; f < F; ++f)
            for (size_t oh = 0; oh < OH; ++oh)
                for (size_t ow = 0; ow < OW; ++ow) {
                    double acc = 0.0;
                    for (size_t c = 0; c < C; ++c)
                        for (size_t kh = 0; kh < KH; ++kh)
                            for (size_t kw = 0; kw < KW; ++kw) {
                                std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + kh) -
                                                    static_cast<std::ptrdiff_t>(p);
                                std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kw) -
                                                    static_cast<std::ptrdiff_t>(p);
                                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(H) ||
                                    iw >= static_cast<std::ptrdiff_t>(W))
                                    continue;
                                acc += x[((b * C + c) * H + ih) * W + iw] *
                                       w[((f * C + c) * KH + kh) * KW + kw];
                            }
                    out[((b * F + f) * OH + oh) * OW + ow] = acc;
                }
    return out;
}

// ============================================================================
// construction and basic invariants
// ============================================================================

TEST_CASE("from_data validates shape against value count") {
    CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_NOTHROW(Tensor::from_data({2, 3}, std::vector<double>(6, 0.0)));
    CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("non-finite inputs and outputs are rejected") {
    CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), NumericError);
    Tensor big = Tensor::full({2}, 1e308);
    CHECK_THROWS_AS(scale(big, 10.0), NumericError); // overflows to inf
}

TEST_CASE("item refuses non-scalars") {
    CHECK_THROWS_AS(Tensor::zeros({3}).item(), ShapeError);
}

TEST_CASE("rng determinism and distribution ranges") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(7);
    for (int i = 0; i < 1000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        int64_t k = r.uniform_int(-3, 3);
        CHECK(k >= -3);
        CHECK(k <= 3);
    }
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}

// ============================================================================
// forward values
// ============================================================================

TEST_CASE("elementwise ops broadcast along trailing dimensions") {
    Tensor m = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor v = Tensor::from_data({3}, {10, 20, 30});
    Tensor s = Tensor::scalar(2.0);

    Tensor sum = add(m, v);
    CHECK(sum.shape() == Shape{2, 3});
    CHECK(sum.data() == std::vector<double>{11, 22, 33, 14, 25, 36});

    Tensor diff = sub(m, v);
    CHECK(diff.data() == std::vector<double>{-9, -18, -27, -6, -15, -24});

    Tensor prod = mul(m, s);
    CHECK(prod.data() == std::vector<double>{2, 4, 6, 8, 10, 12});

    Tensor col = Tensor::from_data({2, 1}, {100, 200});
    Tensor colsum = add(m, col);
    CHECK(colsum.data() == std::vector<double>{101, 102, 103, 204, 205, 206});

    CHECK_THROWS_AS(add(m, Tensor::zeros({2})), ShapeError); // (2,3) vs (2,)
}

TEST_CASE("relu clamps negatives") {
    Tensor x = Tensor::from_data({4}, {-2, -0.5, 0, 3});
    CHECK(relu(x).data() == std::vector<double>{0, 0, 0, 3});
}

TEST_CASE("matmul matches a hand-worked product") {
    Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 2});
    CHECK(c.data() == std::vector<double>{58, 64, 139, 154});
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
    CHECK_THROWS_AS(matmul(Tensor::zeros({3}), b), ShapeError);
}

TEST_CASE("conv2d forward matches the reference on randomized configs") {
    Rng rng(101);
    struct Cfg {
        size_t B, C, H, W, F, K, s, p;
    };
    std::vector<Cfg> cfgs = {
        {1, 1, 4, 4, 1, 3, 1, 0}, {1, 2, 5, 7, 3, 3, 1, 1}, {2, 3, 6, 6, 4, 3, 2, 1},
        {1, 1, 4, 4, 2, 1, 1, 0}, {2, 2, 9, 5, 3, 3, 2, 1}, {1, 3, 8, 8, 2, 3, 2, 0},
    };
    for (const auto& c : cfgs) {
        Tensor x = rand_tensor({c.B, c.C, c.H, c.W}, rng, false);
        Tensor w = rand_tensor({c.F, c.C, c.K, c.K}, rng, false);
        Tensor y = conv2d(x, w, c.s, c.p);
        size_t OH = (c.H + 2 * c.p - c.K) / c.s + 1;
        size_t OW = (c.W + 2 * c.p - c.K) / c.s + 1;
        REQUIRE(y.shape() == Shape{c.B, c.F, OH, OW});
        auto ref = conv_ref(x.data(), c.B, c.C, c.H, c.W, w.data(), c.F, c.K, c.K, c.s, c.p, OH, OW);
        for (size_t i = 0; i < ref.size(); ++i) {
            CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv2d rejects bad geometry") {
    Tensor x = Tensor::zeros({1, 2, 4, 4});
    Tensor w = Tensor::zeros({3, 2, 3, 3});
    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({3, 1, 3, 3}), 1, 0), ShapeError); // channel mismatch
    CHECK_THROWS_AS(conv2d(x, w, 0, 0), ShapeError);                           // zero stride
    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 5, 5}), 1, 0), ShapeError); // kernel too large
}

TEST_CASE("l2_normalize produces unit rows and tolerates zero rows") {
    Tensor x = Tensor::from_data({2, 3}, {3, 0, 4, 0, 0, 0});
    Tensor y = l2_normalize(x);
    CHECK(y.data()[0] == doctest::Approx(0.6));
    CHECK(y.data()[2] == doctest::Approx(0.8));
    // zero row: divided by eps, stays zero, no fault
    CHECK(y.data()[3] == 0.0);
    CHECK(y.data()[4] == 0.0);
}

TEST_CASE("cosine_similarity endpoints and degeneracy") {
    Tensor a = Tensor::from_data({3}, {1, 2, 2});
    Tensor b = Tensor::from_data({3}, {2, 4, 4});
    CHECK(cosine_similarity(a, b).item() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(a, neg(b)).item() == doctest::Approx(-1.0).epsilon(1e-12));
    Tensor c = Tensor::from_data({2}, {1, 0});
    Tensor d = Tensor::from_data({2}, {0, 1});
    CHECK(cosine_similarity(c, d).item() == doctest::Approx(0.0));
    CHECK_THROWS_AS(cosine_similarity(c, Tensor::zeros({2})), NumericError);
    CHECK_THROWS_AS(cosine_similarity(c, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("concat along both axes") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({1, 2}, {5, 6});
    Tensor r0 = concat<double>({a, b}, 0);
    CHECK(r0.shape() == Shape{3, 2});
    CHECK(r0.data() == std::vector<double>{1, 2, 3, 4, 5, 6});

    Tensor c = Tensor::from_data({2, 1}, {9, 10});
    Tensor r1 = concat<double>({a, c}, 1);
    CHECK(r1.shape() == Shape{2, 3});
    CHECK(r1.data() == std::vector<double>{1, 2, 9, 3, 4, 10});

    CHECK_THROWS_AS(concat<double>({a, b}, 1), ShapeError);
    CHECK_THROWS_AS(concat<double>({}, 0), ShapeError);
}

TEST_CASE("reductions and pooling") {
    Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    CHECK(sum_all(x).item() == 10.0);
    CHECK(mean_all(x).item() == 2.5);
    Tensor img = Tensor::from_data({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
    Tensor pooled = global_avg_pool(img);
    CHECK(pooled.shape() == Shape{1, 2});
    CHECK(pooled.data() == std::vector<double>{2.5, 25.0});
    CHECK_THROWS_AS(global_avg_pool(x), ShapeError);
}

TEST_CASE("reshape preserves values and validates the element count") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor y = reshape(x, {6});
    CHECK(y.data() == x.data());
    CHECK_THROWS_AS(reshape(x, {4}), ShapeError);
}

// ============================================================================
// engine semantics
// ============================================================================

TEST_CASE("backward requires a scalar with gradient-requiring leaves") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    Tensor y = add(x, x);
    CHECK_THROWS_AS(backward(y), ShapeError); // not scalar
    Tensor z = sum_all(add(Tensor::scalar(1.0), Tensor::scalar(2.0)));
    CHECK_THROWS_AS(backward(z), UsageError); // no grads anywhere
}

TEST_CASE("fan-out accumulates gradients additively") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
    Tensor y = sum_all(add(x, x));
    backward(y);
    CHECK(x.grad() == std::vector<double>{2, 2, 2});

    x.zero_grad();
    Tensor sq = sum_all(mul(x, x));
    backward(sq);
    CHECK(sq.item() == 14.0);
    CHECK(x.grad() == std::vector<double>{2, 4, 6});
}

TEST_CASE("repeated backward keeps accumulating until grads are zeroed") {
    Tensor x = Tensor::from_data({2}, {1, 1}, true);
    Tensor y = sum_all(x);
    backward(y);
    backward(y);
    CHECK(x.grad() == std::vector<double>{2, 2});
    x.zero_grad();
    CHECK(x.grad() == std::vector<double>{0, 0});
}

TEST_CASE("detach blocks gradient flow") {
    Tensor x = Tensor::from_data({2}, {3, 4}, true);
    Tensor d = detach(x);
    CHECK(!d.requires_grad());
    CHECK(d.data() == x.data());
    Tensor y = sum_all(mul(x, d)); // d acts as a constant
    backward(y);
    CHECK(x.grad() == std::vector<double>{3, 4});
}

TEST_CASE("grad-free inputs build no graph") {
    Tensor x = Tensor::from_data({2, 2}, {1, -1, 2, -2});
    Tensor y = relu(x);
    CHECK(!y.requires_grad());
    CHECK(y.node()->parents.empty());
}

TEST_CASE("identical graphs produce bitwise-identical values and grads") {
    for (int rep = 0; rep < 3; ++rep) {
        Rng rng(55);
        Tensor x = rand_tensor({2, 3, 5, 5}, rng);
        Tensor w = rand_tensor({2, 3, 3, 3}, rng);
        Tensor loss = mean_all(relu(conv2d(x, w, 2, 1)));
        backward(loss);
        static std::vector<double> first_grad;
        static double first_loss;
        if (rep == 0) {
            first_grad = w.grad();
            first_loss = loss.item();
        } else {
            CHECK(w.grad() == first_grad);
            CHECK(loss.item() == first_loss);
        }
    }
}

// ============================================================================
// finite-difference checks, one op at a time
// ============================================================================

TEST_CASE("gradcheck: elementwise ops under broadcasting") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        Tensor a = rand_tensor({2, 3}, rng);
        Tensor b = rand_tensor({3}, rng);
        Tensor c = rand_tensor({2, 1}, rng);
        std::vector<Tensor> params = {a, b, c};
        auto rep = check_gradients(
            params, [&]() { return sum_all(mul(add(a, b), sub(a, c))); }, 1e-5, 1e-6);
        CHECK_MESSAGE(rep.ok, "seed ", seed, " max_err ", rep.max_err);
    }
}

TEST_CASE("gradcheck: scale, neg, relu") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed * 31);
        Tensor x = rand_tensor({4, 3}, rng);
        std::vector<Tensor> params = {x};
        auto rep = check_gradients(
            params, [&]() { return mean_all(relu(scale(neg(x), 1.7))); }, 1e-5, 1e-6);
        CHECK_MESSAGE(rep.ok, "seed ", seed, " max_err ", rep.max_err);
    }
}

TEST_CASE("gradcheck: matmul") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed * 97);
        Tensor a = rand_tensor({3, 4}, rng);
        Tensor b = rand_tensor({4, 2}, rng);
        std::vector<Tensor> params = {a, b};
        auto rep = check_gradients(
            params, [&]() { return sum_all(matmul(a, b)); }, 1e-5, 1e-6);
        CHECK_MESSAGE(rep.ok, "seed ", seed, " max_err ", rep.max_err);
    }
}

TEST_CASE("gradcheck: conv2d across stride and padding") {
    struct Cfg {
        size_t s, p;
    };
    for (Cfg c : {Cfg{1, 0}, Cfg{1, 1}, Cfg{2, 1}}) {
        for (uint64_t seed = 1; seed <= 4; ++seed) {
            Rng rng(seed * 7 + c.s * 100 + c.p);
            Tensor x = rand_tensor({2, 2, 5, 6}, rng);
            Tensor w = rand_tensor({3, 2, 3, 3}, rng);
            std::vector<Tensor> params = {x, w};
            auto rep = check_gradients(
                params, [&]() { return mean_all(conv2d(x, w, c.s, c.p)); }, 1e-5, 1e-6);
            CHECK_MESSAGE(rep.ok, "stride ", c.s, " pad ", c.p, " seed ", seed, " max_err ",
                          rep.max_err);
        }
    }
}

TEST_CASE("gradcheck: l2_normalize") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed * 13);
        Tensor x = rand_tensor({3, 4}, rng);
        Tensor probe = rand_tensor({3, 4}, rng, false);
        std::vector<Tensor> params = {x};
        auto rep = check_gradients(
            params, [&]() { return sum_all(mul(l2_normalize(x), probe)); }, 1e-5, 1e-6);
        CHECK_MESSAGE(rep.ok, "seed ", seed, " max_err ", rep.max_err);
    }
}

TEST_CASE("gradcheck: cosine_similarity") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed * 17);
        Tensor a = rand_tensor({6}, rng);
        Tensor b = rand_tensor({6}, rng);
        std::vector<Tensor> params = {a, b};
        auto rep = check_gradients(
            params, [&]() { return cosine_similarity(a, b); }, 1e-5, 1e-6);
        CHECK_MESSAGE(rep.ok, "seed ", seed, " max_err ", rep.max_err);
    }
}

TEST_CASE("gradcheck: concat, reshape, pooling") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed * 23);
        Tensor a = rand_tensor({2, 3}, rng);
        Tensor b = rand_tensor({1, 3}, rng);
        Tensor img = rand_tensor({1, 2, 3, 3}, rng);
        std::vector<Tensor> params = {a, b, img};
        auto rep = check_gradients(
            params,
            [&]() {
                Tensor stacked = concat<double>({a, b}, 0);
                Tensor flat = reshape(stacked, {9});
                return add(mean_all(flat), sum_all(global_avg_pool(img)));
            },
            1e-5, 1e-6);
        CHECK_MESSAGE(rep.ok, "seed ", seed, " max_err ", rep.max_err);
    }
}

TEST_CASE("gradcheck: probe subsets hit the same graph deterministically") {
    Rng rng(91);
    Tensor x = rand_tensor({8, 8}, rng);
    std::vector<Tensor> params = {x};
    auto full = check_gradients(params, [&]() { return sum_all(mul(x, x)); }, 1e-5, 1e-6);
    auto sub1 = check_gradients(params, [&]() { return sum_all(mul(x, x)); }, 1e-5, 1e-6, 5, 99);
    auto sub2 = check_gradients(params, [&]() { return sum_all(mul(x, x)); }, 1e-5, 1e-6, 5, 99);
    CHECK(full.ok);
    CHECK(sub1.ok);
    CHECK(sub1.probes == 5);
    CHECK(sub1.max_err == sub2.max_err);
    CHECK(sub1.worst_entry == sub2.worst_entry);
}

TEST_CASE("gradcheck refines a stencil that straddles a relu kink") {
    // f(x) = sum(relu(x - c)) with the kink planted inside the primary
    // stencil but outside the refined ones. x0 = 0, c = -h/3: f is smooth at
    // x0 with slope 1, yet the +-h probe crosses the corner and reads a
    // chord. Refinement must rescue the entry and count it.
    double h = 1e-5;
    Tensor x = Tensor::from_data({1}, {0.0}, true);
    Tensor c = Tensor::from_data({1}, {h / 3.0});
    std::vector<Tensor> params = {x};
    auto build = [&]() { return sum_all(relu(add(x, c))); };
    auto rep = check_gradients(params, build, h, 1e-4);
    CHECK(rep.ok);
    CHECK(rep.kink_hits == 1);
    CHECK(rep.max_err < 1e-4);
}

TEST_CASE("gradcheck refinement does not rescue a kink hugging the base point") {
    // Kink at h/64 from x0: every refined stencil still straddles it, the
    // quotients never converge to the analytic slope, and the entry fails.
    double h = 1e-5;
    Tensor x = Tensor::from_data({1}, {0.0}, true);
    Tensor c = Tensor::from_data({1}, {h / 64.0});
    std::vector<Tensor> params = {x};
    auto build = [&]() { return sum_all(relu(add(x, c))); };
    auto rep = check_gradients(params, build, h, 1e-4);
    CHECK_FALSE(rep.ok);
    CHECK(rep.kink_hits == 0);
}

TEST_CASE("gradcheck rejects a nondeterministic loss builder") {
    Rng rng(3);
    Tensor x = rand_tensor({2}, rng);
    std::vector<Tensor> params = {x};
    int calls = 0;
    CHECK_THROWS_AS(check_gradients(params,
                                    [&]() {
                                        ++calls;
                                        return scale(sum_all(x), 1.0 + calls * 0.1);
                                    }),
                    NumericError);
}
