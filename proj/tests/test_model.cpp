#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "univip/gradcheck.hpp"
#include "univip/model.hpp"

using namespace univip;

namespace {

Tensor rand_image(size_t side, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(3 * side * side);
    for (double& x : v) x = rng.uniform(0.05, 0.95);
    return Tensor::from_data({3, side, side}, std::move(v));
}

std::vector<std::vector<double>> snapshot(std::vector<NamedParam<double>> params,
                                          const std::string& prefix) {
    std::vector<std::vector<double>> out;
    for (auto& p : params) {
        if (p.name.rfind(prefix, 0) == 0) out.push_back(p.tensor.data());
    }
    return out;
}

} // namespace

// ============================================================================
// forward contracts
// ============================================================================

TEST_CASE("forward paths emit d-dimensional vectors for both input sizes") {
    Model model(ModelDims{}, 1);
    for (size_t side : {48u, 24u}) {
        Tensor img = rand_image(side, side);
        CHECK(model.online_forward(img).shape() == Shape{32});
        CHECK(model.online_projection(img).shape() == Shape{32});
        CHECK(model.target_forward(img).shape() == Shape{32});
    }
    CHECK_THROWS_AS(model.online_forward(Tensor::zeros({1, 24, 24})), ShapeError);
}

TEST_CASE("forwards are deterministic") {
    Model model(ModelDims{}, 2);
    Tensor img = rand_image(24, 9);
    CHECK(model.online_forward(img).data() == model.online_forward(img).data());
    CHECK(model.target_forward(img).data() == model.target_forward(img).data());
}

TEST_CASE("freshly built target mirrors the online projection exactly") {
    Model model(ModelDims{}, 3);
    Tensor img = rand_image(24, 10);
    CHECK(model.online_projection(img).data() == model.target_forward(img).data());
}

TEST_CASE("target path carries no gradient") {
    Model model(ModelDims{}, 4);
    Tensor img = rand_image(24, 11);
    Tensor out = model.target_forward(img);
    CHECK(!out.node()->requires_grad);
    CHECK_THROWS_AS(backward(sum_all(out)), UsageError);
}

// ============================================================================
// parameter registry
// ============================================================================

TEST_CASE("registry names are unique and split online/target correctly") {
    Model model(ModelDims{}, 5);
    auto params = model.parameters();
    CHECK(params.size() == 30);
    std::set<std::string> names;
    size_t online_n = 0, target_n = 0;
    for (auto& p : params) {
        CHECK(names.insert(p.name).second);
        if (p.name.rfind("online.", 0) == 0) {
            ++online_n;
            CHECK(p.tensor.node()->requires_grad);
        } else {
            REQUIRE(p.name.rfind("target.", 0) == 0);
            ++target_n;
            CHECK(!p.tensor.node()->requires_grad);
        }
    }
    CHECK(online_n == 18);
    CHECK(target_n == 12);
    CHECK(model.online_parameters().size() == 18);
}

TEST_CASE("scene loss gradients reach every encoder and head parameter") {
    Model model(ModelDims{}, 6);
    Tensor img = rand_image(24, 12);
    Tensor loss = sum_all(model.online_forward(img));
    for (auto& p : model.online_parameters()) p.tensor.zero_grad();
    backward(loss);
    for (auto& p : model.online_parameters()) {
        if (p.name.rfind("online.fusion", 0) == 0) continue;  // not in this path
        double mag = 0;
        for (double g : p.tensor.grad()) mag += std::abs(g);
        CHECK_MESSAGE(mag > 0.0, p.name, " received no gradient");
    }
}

// ============================================================================
// fusion
// ============================================================================

TEST_CASE("fusion validates count and shape") {
    Model model(ModelDims{}, 7);
    std::vector<Tensor> three(3, Tensor::zeros({32}));
    CHECK_THROWS_AS(model.fuse_instances(three), ShapeError);
    std::vector<Tensor> bad(4, Tensor::zeros({16}));
    CHECK_THROWS_AS(model.fuse_instances(bad), ShapeError);
}

TEST_CASE("block-averaging fusion reproduces identical inputs") {
    Model model(ModelDims{}, 8);
    auto& w = model.fusion_weight().node()->data;
    const size_t d = 32, k = 4;
    for (size_t r = 0; r < k * d; ++r) {
        for (size_t c = 0; c < d; ++c) w[r * d + c] = (r % d == c) ? 0.25 : 0.0;
    }
    Rng rng(13);
    std::vector<double> v(d);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    std::vector<Tensor> inst(k, Tensor::from_data({d}, v));
    Tensor fused = model.fuse_instances(inst);
    for (size_t i = 0; i < d; ++i) CHECK(fused.data()[i] == v[i]);
}

TEST_CASE("zero fusion weights give the zero vector") {
    Model model(ModelDims{}, 9);
    auto& w = model.fusion_weight().node()->data;
    std::fill(w.begin(), w.end(), 0.0);
    std::vector<Tensor> inst(4, Tensor::full({32}, 0.7));
    Tensor fused = model.fuse_instances(inst);
    for (double x : fused.data()) CHECK(x == 0.0);
}

TEST_CASE("fusion initializes near block averaging") {
    Model model(ModelDims{}, 10);
    std::vector<Tensor> inst(4, Tensor::full({32}, 1.0));
    Tensor fused = model.fuse_instances(inst);
    for (double x : fused.data()) CHECK(x == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("gradients flow through fusion to weights and instances") {
    Model model(ModelDims{}, 11);
    Rng rng(14);
    std::vector<Tensor> inst;
    for (int i = 0; i < 4; ++i) {
        std::vector<double> v(32);
        for (double& x : v) x = rng.uniform(-1.0, 1.0);
        inst.push_back(Tensor::from_data({32}, std::move(v), true));
    }
    std::vector<Tensor> params = inst;
    params.push_back(model.fusion_weight());
    params.push_back(model.fusion_bias());
    auto report = check_gradients(
        params, [&] { return sum_all(mul(model.fuse_instances(inst), model.fuse_instances(inst))); },
        1e-5, 1e-4, 40, 77);
    CHECK_MESSAGE(report.ok, "worst ", report.worst_param, " err ", report.max_err);
}

// ============================================================================
// ema
// ============================================================================

TEST_CASE("ema endpoints: freeze at m=1, copy at m=0") {
    Model model(ModelDims{}, 15);
    // push online away from target first
    for (auto& p : model.online_parameters()) {
        for (double& v : p.tensor.node()->data) v += 0.25;
    }
    auto before = snapshot(model.parameters(), "target.");
    model.ema_update(1.0);
    CHECK(snapshot(model.parameters(), "target.") == before);
    model.ema_update(0.0);
    auto after = snapshot(model.parameters(), "target.");
    auto online_enc_proj = snapshot(model.parameters(), "online.encoder");
    auto online_proj = snapshot(model.parameters(), "online.proj");
    online_enc_proj.insert(online_enc_proj.end(), online_proj.begin(), online_proj.end());
    CHECK(after == online_enc_proj);
    CHECK_THROWS_AS(model.ema_update(-0.1), UsageError);
    CHECK_THROWS_AS(model.ema_update(1.1), UsageError);
}

TEST_CASE("single ema step matches the update rule entrywise") {
    Model model(ModelDims{}, 16);
    auto params = model.parameters();
    TensorT<double>* tw = nullptr;
    TensorT<double>* ow = nullptr;
    for (auto& p : params) {
        if (p.name == "target.encoder.conv1.weight") tw = &p.tensor;
        if (p.name == "online.encoder.conv1.weight") ow = &p.tensor;
    }
    REQUIRE(tw);
    REQUIRE(ow);
    tw->node()->data[0] = 1.0;
    ow->node()->data[0] = 0.0;
    model.ema_update(0.99);
    CHECK(tw->data()[0] == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("ema closed form holds to 1e-12 over 100 steps") {
    Model model(ModelDims{}, 17);
    Rng rng(18);
    for (auto& p : model.online_parameters()) {
        for (double& v : p.tensor.node()->data) v += rng.uniform(-0.5, 0.5);
    }
    auto xi0 = snapshot(model.parameters(), "target.");
    auto theta = snapshot(model.parameters(), "online.encoder");
    auto theta_proj = snapshot(model.parameters(), "online.proj");
    theta.insert(theta.end(), theta_proj.begin(), theta_proj.end());

    const double m = 0.99;
    const int n = 100;
    for (int i = 0; i < n; ++i) model.ema_update(m);

    auto xi_n = snapshot(model.parameters(), "target.");
    double mn = std::pow(m, n);
    double worst = 0.0;
    for (size_t t = 0; t < xi_n.size(); ++t) {
        for (size_t i = 0; i < xi_n[t].size(); ++i) {
            double expect = mn * xi0[t][i] + (1.0 - mn) * theta[t][i];
            worst = std::max(worst, std::abs(xi_n[t][i] - expect));
        }
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("gradient steps on online parameters never touch the target") {
    Model model(ModelDims{}, 19);
    Tensor img = rand_image(24, 20);
    auto before = snapshot(model.parameters(), "target.");
    Tensor loss = sum_all(model.online_forward(img));
    backward(loss);
    for (auto& p : model.online_parameters()) {
        auto& data = p.tensor.node()->data;
        const auto& g = p.tensor.grad();
        for (size_t i = 0; i < data.size(); ++i) data[i] -= 0.01 * g[i];
    }
    CHECK(snapshot(model.parameters(), "target.") == before);
}

// ============================================================================
// momentum schedule
// ============================================================================

TEST_CASE("momentum schedule endpoints and midpoint") {
    CHECK(momentum_schedule(0, 1000, 0.99) == 0.99);
    CHECK(momentum_schedule(1000, 1000, 0.99) == 1.0);
    CHECK(momentum_schedule(500, 1000, 0.99) == doctest::Approx(0.995).epsilon(1e-12));
}

TEST_CASE("momentum schedule is monotone and validates inputs") {
    double prev = -1.0;
    for (long s = 0; s <= 400; ++s) {
        double m = momentum_schedule(s, 400, 0.99);
        CHECK(m >= prev);
        CHECK(m >= 0.99);
        CHECK(m <= 1.0);
        prev = m;
    }
    CHECK_THROWS_AS(momentum_schedule(-1, 100, 0.99), UsageError);
    CHECK_THROWS_AS(momentum_schedule(101, 100, 0.99), UsageError);
    CHECK_THROWS_AS(momentum_schedule(0, 0, 0.99), UsageError);
    CHECK_THROWS_AS(momentum_schedule(0, 100, 1.0), UsageError);
}

// ============================================================================
// encoder structure
// ============================================================================

TEST_CASE("encoder map shifts with the input away from borders") {
    Model model(ModelDims{}, 21);
    const size_t side = 96;
    auto impulse_at = [&](size_t y, size_t x) {
        std::vector<double> v(3 * side * side, 0.1);
        for (size_t c = 0; c < 3; ++c) {
            for (size_t dy = 0; dy < 3; ++dy) {
                for (size_t dx = 0; dx < 3; ++dx) {
                    v[c * side * side + (y + dy) * side + (x + dx)] = 0.9;
                }
            }
        }
        return Tensor::from_data({3, side, side}, std::move(v));
    };
    // total stride 16: moving the stimulus 16px right moves the map one cell
    Tensor map_a = model.encoder_map(impulse_at(40, 32));
    Tensor map_b = model.encoder_map(impulse_at(40, 48));
    REQUIRE(map_a.shape() == Shape{1, 64, 6, 6});
    const size_t C = 64, H = 6, W = 6;
    for (size_t c = 0; c < C; ++c) {
        for (size_t y = 2; y <= 3; ++y) {
            for (size_t x = 2; x <= 2; ++x) {
                double a = map_a.data()[c * H * W + y * W + x];
                double b = map_b.data()[c * H * W + y * W + (x + 1)];
                CHECK(a == doctest::Approx(b).epsilon(1e-12));
            }
        }
    }
}

// ============================================================================
// full-path gradient check
// ============================================================================

TEST_CASE("scene path gradients match finite differences") {
    Model model(ModelDims{}, 22);
    Tensor img = rand_image(24, 23);
    Tensor anchor = Tensor::full({32}, 0.5);
    std::vector<Tensor> params;
    for (auto& p : model.online_parameters()) params.push_back(p.tensor);
    auto report = check_gradients(
        params, [&] { return neg(cosine_similarity(model.online_forward(img), anchor)); }, 1e-5,
        1e-4, 6, 99);
    CHECK_MESSAGE(report.ok, "worst ", report.worst_param, "[", report.worst_entry, "] analytic ",
                  report.analytic, " numeric ", report.numeric, " err ", report.max_err);
}
