#include <doctest.h>

#include <random>

#include "nsds/baselines.hpp"
#include "nsds/error.hpp"
#include "nsds/numerical_vulnerability.hpp"
#include "nsds/pipeline.hpp"
#include "nsds/synth.hpp"
#include "oracles.hpp"

using namespace nsds;

namespace {

std::vector<const Matrix*> ptrs(const std::vector<Matrix>& ms) {
    std::vector<const Matrix*> out;
    for (const auto& m : ms) out.push_back(&m);
    return out;
}

ArchConfig config(std::size_t layers) {
    SynthShape s;
    s.num_layers = layers;
    return make_arch_config(s);
}

}  // namespace

TEST_CASE("method names") {
    for (Method m : {Method::mse, Method::zd, Method::ewq, Method::kurtboost, Method::nsds})
        CHECK(parse_method(to_string(m)) == m);
    CHECK(!parse_method("awq"));
    CHECK(parse_direction(to_string(Direction::lower_is_sensitive)) == Direction::lower_is_sensitive);
}

TEST_CASE("MSE baseline") {
    const std::vector<Matrix> grid{Matrix(1, 4, {0, 1, 2, 3})};
    CHECK(mse_score(ptrs(grid), 2, 64) == 0.0);
    std::mt19937_64 rng(3);
    const std::vector<Matrix> w{oracle::gaussian(16, 128, rng)};
    std::vector<Matrix> doubled = w;
    for (double& x : doubled[0].values()) x *= 2.0;
    CHECK(mse_score(ptrs(doubled)) == doctest::Approx(4.0 * mse_score(ptrs(w))).epsilon(1e-12));
    CHECK(mse_score(ptrs(w), 4) <= mse_score(ptrs(w), 2));
}

TEST_CASE("heavy tails raise the MSE probe") {
    std::mt19937_64 rng(5);
    std::student_t_distribution<double> t(3.0);
    Matrix heavy(32, 128);
    for (double& x : heavy.values()) x = t(rng) / std::sqrt(3.0);
    const std::vector<Matrix> h{heavy}, g{oracle::gaussian(32, 128, rng)};
    CHECK(mse_score(ptrs(h)) > mse_score(ptrs(g)));
}

TEST_CASE("ZD baseline") {
    const std::vector<Matrix> two{Matrix(1, 4, {1, -1, 1, -1})};
    CHECK(zd_score(ptrs(two)) == 0.0);
    std::mt19937_64 rng(100);
    const std::vector<Matrix> g{oracle::gaussian(100, 1000, rng)};
    CHECK(zd_score(ptrs(g)) == doctest::Approx(0.158655).epsilon(0.01 / 0.158655));
    for (double c : {0.5, 7.0}) {
        std::vector<Matrix> scaled = g;
        for (double& x : scaled[0].values()) x *= c;
        CHECK(std::abs(zd_score(ptrs(scaled)) - zd_score(ptrs(g))) <= 1e-12);
    }
}

TEST_CASE("EWQ baseline") {
    const std::vector<Matrix> single{Matrix(1, 1, {4.2})};
    CHECK(ewq_entropy(single[0]) == doctest::Approx(-std::log(1.01)).epsilon(1e-14));
    const double n = 50;
    CHECK(ewq_entropy(Matrix(5, 10, std::vector<double>(50, 0.3))) ==
          doctest::Approx(-std::log(1.0 / n + 0.01)).epsilon(1e-13));
    std::mt19937_64 rng(1);
    const std::vector<Matrix> ms{oracle::gaussian(10, 10, rng), oracle::gaussian(10, 30, rng)};
    const double h1 = ewq_entropy(ms[0]), h2 = ewq_entropy(ms[1]);
    CHECK(ewq_score(ptrs(ms)) == doctest::Approx((100 * h1 + 300 * h2) / 400).epsilon(1e-14));
}

TEST_CASE("KurtBoost raw kurtosis is excess plus three") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
        const auto x = oracle::gaussian_vector(10 + t, rng);
        CHECK(raw_kurtosis(x) == excess_kurtosis(x) + 3.0);
    }
}

TEST_CASE("KurtBoost outlier detection") {
    const auto gentle = kurtboost_scores({3, 3.1, 3.2, 3.3});
    CHECK(gentle.outliers.empty());
    CHECK(gentle.ranking == std::vector<std::size_t>{3, 2, 1, 0});

    const auto flat = kurtboost_scores({3, 3, 3});
    CHECK(flat.outliers.empty());
    CHECK(kurtboost_scores({5}).outliers.empty());

    // A single large jump among many small ones is flagged at its more anomalous endpoint.
    std::vector<double> k(30);
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = 3.0 + 0.01 * double(i % 3);
    for (std::size_t i = 20; i < k.size(); ++i) k[i] += 40.0;
    const auto step = kurtboost_scores(k);
    CHECK(step.outliers == std::vector<std::size_t>{20});
    CHECK(step.ranking.front() == 20);
}

TEST_CASE("KurtBoost spike fixture z values") {
    const auto r = kurtboost_scores({3, 3, 3, 50, 3, 3, 3, 3});
    REQUIRE(r.z.size() == 7);
    // Seven differences with two equal and opposite spikes: z = sqrt(7/2) at the spikes.
    CHECK(r.z[2] == doctest::Approx(std::sqrt(3.5)).epsilon(1e-12));
    CHECK(r.z[3] == doctest::Approx(std::sqrt(3.5)).epsilon(1e-12));
    CHECK(r.ranking.front() == 3);
}

TEST_CASE("score_model dispatch") {
    const ArchConfig c = config(3);
    const TensorStore store = synth_model(c, 7, SynthProfile{{1}, {}, 2});
    const auto nsds = score_model(store, c, Method::nsds);
    CHECK(nsds.values == score_nsds(store, c).scores.s_nsds);
    const auto zd = score_model(store, c, Method::zd);
    CHECK(zd.direction == Direction::lower_is_sensitive);
    CHECK(score_model(store, c, Method::kurtboost).values == score_model(store, c, Method::kurtboost).values);
    for (Method m : {Method::mse, Method::ewq, Method::kurtboost}) {
        const auto v = score_model(store, c, m);
        CHECK(v.values.size() == 3);
        CHECK(v.direction == Direction::higher_is_sensitive);
    }
    const auto kb = score_model(store, c, Method::kurtboost);
    CHECK(kb.values[1] > kb.values[0]);
    CHECK(kb.values[1] > kb.values[2]);
}

TEST_CASE("KurtBoost plans put outliers first") {
    LayerScoreVector v;
    v.method = Method::kurtboost;
    v.values = {9, 3, 3, 4};
    v.outliers = {2};
    const auto plan = plan_from_scores(v, 3.0);
    CHECK(plan.ranking.front() == 2);
    CHECK(plan.bits == std::vector<int>{4, 2, 4, 2});
}
