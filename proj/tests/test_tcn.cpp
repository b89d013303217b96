#include "support.hpp"

#include "fsnet/tcn.hpp"

#include <filesystem>

using namespace fsnet;

namespace {

TcnModel zero_biases(TcnModel m)
{
    for (auto& l : m.layers)
        l.bias.setZero();
    for (auto& s : m.skips)
        if (s)
            s->bias.setZero();
    return m;
}

bool same_model(const TcnModel& a, const TcnModel& b)
{
    return serialize_model(a) == serialize_model(b);
}

} // namespace

TEST_CASE("receptive field")
{
    TcnConfig c = test::small_config();
    c.dilations = {1, 2, 4};
    CHECK(c.receptive_field() == 15);
    CHECK(TcnConfig{}.receptive_field() == 29);
    CHECK(TcnConfig{}.dilation_schedule() == std::vector<Index>{1, 2, 4});

    c.lookback = 20;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.lookback = 15;
    CHECK_NOTHROW(c.validate());
    c.horizon = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("init is deterministic per seed")
{
    const TcnConfig c = test::small_config();
    CHECK(same_model(tcn_init(c, 7), tcn_init(c, 7)));
    CHECK_FALSE(same_model(tcn_init(c, 7), tcn_init(c, 8)));
    const TcnModel m = tcn_init(c, 7);
    CHECK(m.layers.size() == 6);
    CHECK(m.skips[0].has_value());
    CHECK_FALSE(m.skips[1].has_value());
    for (const auto& l : m.layers) {
        CHECK(l.phi_weight.isZero(0));
        CHECK(l.g_fast.isZero(0));
    }
}

TEST_CASE("zero window through zero activations gives the head bias")
{
    TcnModel m = zero_biases(tcn_init(test::small_config(), 3));
    std::mt19937_64 rng(1);
    m.head_bias = test::random_vec(4, rng);
    const Mat x = Mat::Zero(2, 8);
    CHECK(test::same(tcn_forward(m, x), m.head_bias));
    CHECK(test::same(tcn_forward(m, x, ForwardMode::adapted), m.head_bias));
}

TEST_CASE("forecast shape and window validation")
{
    const TcnModel m = tcn_init(test::small_config(), 3);
    std::mt19937_64 rng(2);
    CHECK(tcn_forward(m, test::random_mat(2, 8, rng)).size() == 4);
    CHECK_THROWS_AS(tcn_forward(m, test::random_mat(2, 7, rng)), ShapeError);
    CHECK_THROWS_AS(tcn_forward(m, test::random_mat(3, 8, rng)), ShapeError);
}

TEST_CASE("re-windowing an extended series at an earlier anchor reproduces the forecast")
{
    const TcnModel m = tcn_init(test::small_config(), 4);
    std::mt19937_64 rng(3);
    const Mat series = test::random_mat(2, 30, rng);
    const Vec before = tcn_forward(m, series.middleCols(10, 8));
    Mat extended(2, 60);
    extended << series, test::random_mat(2, 30, rng);
    CHECK(test::same(tcn_forward(m, extended.middleCols(10, 8)), before));
}

TEST_CASE("a block whose last conv is zero passes its input through the skip path")
{
    TcnModel m = tcn_init(test::small_config(), 5);
    for (std::size_t b = 0; b < m.skips.size(); ++b) {
        auto& last = m.layers[b * 2 + 1];
        last.theta.setZero();
        last.bias.setZero();
    }
    std::mt19937_64 rng(4);
    const Mat x = test::random_mat(2, 8, rng);
    const Vec h = m.skips[0]->weight * x.col(7) + m.skips[0]->bias;
    const Vec expected = m.head_weight * h + m.head_bias;
    CHECK(tcn_forward(m, x).isApprox(expected, 1e-14));
}

TEST_CASE("backward")
{
    const TcnModel m = tcn_init(test::small_config(), 6);
    std::mt19937_64 rng(5);
    const Mat x = test::random_mat(2, 8, rng);
    const Vec y = test::random_vec(4, rng);

    SUBCASE("target equal to the forecast gives zero gradients")
    {
        const TcnGradients g = tcn_backward(m, x, tcn_forward(m, x));
        CHECK(g.loss == 0.0);
        CHECK(g.head_weight.isZero(0));
        CHECK(g.head_bias.isZero(0));
        for (const auto& l : g.layers) {
            CHECK(l.theta.isZero(0));
            CHECK(l.bias.isZero(0));
        }
    }

    SUBCASE("a duplicated sample doubles every gradient")
    {
        const TcnGradients one = tcn_backward(m, x, y);
        const std::vector<LossTerm> two{{&x, &y, 1.0}, {&x, &y, 1.0}};
        const TcnGradients dup = loss_gradients(m, two, ForwardMode::plain);
        CHECK(dup.loss == doctest::Approx(2 * one.loss).epsilon(1e-14));
        CHECK(dup.head_weight.isApprox(2 * one.head_weight, 1e-13));
        for (std::size_t l = 0; l < one.layers.size(); ++l)
            CHECK(dup.layers[l].theta.isApprox(2 * one.layers[l].theta, 1e-13));
    }

    SUBCASE("batched terms equal the sum of single-sample gradients")
    {
        const Mat x2 = test::random_mat(2, 8, rng);
        const Vec y2 = test::random_vec(4, rng);
        const std::vector<LossTerm> terms{{&x, &y, 0.3}, {&x2, &y2, 1.7}};
        const TcnGradients both = loss_gradients(m, terms, ForwardMode::plain);
        const TcnGradients a = tcn_backward(m, x, y);
        const TcnGradients b = tcn_backward(m, x2, y2);
        CHECK(both.loss == doctest::Approx(0.3 * a.loss + 1.7 * b.loss));
        for (std::size_t l = 0; l < a.layers.size(); ++l)
            CHECK(both.layers[l].theta.isApprox(0.3 * a.layers[l].theta + 1.7 * b.layers[l].theta, 1e-12));
        CHECK(both.forecast.isApprox(tcn_forward(m, x), 1e-14));
    }

    SUBCASE("theta gradient of the first layer matches central differences")
    {
        const TcnGradients g = tcn_backward(m, x, y);
        const Real h = 1e-5;
        const Mat& theta = m.layers[0].theta;
        for (Index i = 0; i < theta.size(); ++i) {
            TcnModel p = m, q = m;
            p.layers[0].theta.data()[i] += h;
            q.layers[0].theta.data()[i] -= h;
            const Real num = (mse_loss<Real>(tcn_forward(p, x), y) - mse_loss<Real>(tcn_forward(q, x), y)) / (2 * h);
            const Real ana = g.layers[0].theta.data()[i];
            CHECK(std::abs(ana - num) <= 1e-4 * std::max({std::abs(ana), std::abs(num), 1e-6}));
        }
    }

    SUBCASE("target length must equal the horizon")
    {
        CHECK_THROWS_AS(tcn_backward(m, x, Vec::Zero(3)), ShapeError);
    }
}

TEST_CASE("sgd with lr 0 leaves the model unchanged")
{
    TcnModel m = tcn_init(test::small_config(), 7);
    std::mt19937_64 rng(6);
    const TcnModel before = m;
    apply_sgd(m, tcn_backward(m, test::random_mat(2, 8, rng), test::random_vec(4, rng)), 0.0, true);
    CHECK(same_model(m, before));
}

TEST_CASE("checkpoint round trip is bit-exact")
{
    TcnModel m = tcn_init(test::small_config(), 8);
    std::mt19937_64 rng(7);
    m.layers[2].g_fast = test::random_vec(m.layers[2].theta.size(), rng);
    m.layers[2].recalled = test::random_vec(8, rng);
    m.layers[3].memory.slots = test::random_mat(m.layers[3].memory.slots.rows(), 8, rng);
    m.pretrained = true;
    const TcnModel back = deserialize_model(serialize_model(m));
    CHECK(serialize_model(back) == serialize_model(m));
    CHECK(model_hash(back) == model_hash(m));
    CHECK(test::same(back.layers[2].g_fast, m.layers[2].g_fast));
    CHECK(test::same(*back.layers[2].recalled, *m.layers[2].recalled));
    CHECK(back.pretrained);

    const auto path = std::filesystem::temp_directory_path() / "fsnet_test_checkpoint.json";
    save_model(m, path.string());
    CHECK(model_hash(load_model(path.string())) == model_hash(m));
    std::filesystem::remove(path);

    CHECK_THROWS(deserialize_model("{\"format\": 99}"));
}

TEST_CASE("parameter count")
{
    const TcnModel m = tcn_init(test::small_config(), 9);
    // 6 convs of 4 x (C_in * 2) + bias, adaptor 8 x width + 8, skip 4 x 2 + 4, head 4 x 4 + 4
    std::size_t expected = 4 * 2 + 4 + 4 * 4 + 4;
    for (const auto& l : m.layers)
        expected += static_cast<std::size_t>(l.theta.size() + 4 + 8 * l.chunk_width() + 8);
    CHECK(m.parameter_count() == expected);
    CHECK(m.parameter_count() == tcn_init(test::small_config(), 10).parameter_count());
}
