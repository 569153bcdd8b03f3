#include <doctest.h>

#include <random>
#include <set>

#include "nsds/allocation.hpp"
#include "nsds/error.hpp"
#include "nsds/quantizer.hpp"
#include "nsds/synth.hpp"
#include "oracles.hpp"

using namespace nsds;

namespace {

double store_error(const TensorStore& a, const TensorStore& b) {
    double s = 0;
    for (const auto& [name, t] : a) {
        const auto x = t.value.values();
        const auto y = b.matrix(name).values();
        for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    }
    return s;
}

BitAllocationPlan uniform_plan(std::size_t layers, int bits) {
    BitAllocationPlan p;
    p.budget = bits;
    p.bits.assign(layers, bits);
    p.scores.assign(layers, 0.0);
    for (std::size_t l = 0; l < layers; ++l) p.ranking.push_back(l);
    return p;
}

}  // namespace

TEST_CASE("grid-aligned group is exact") {
    const Matrix w(1, 4, {0, 1, 2, 3});
    const auto q = rtn_quantize(w, 2, 64);
    CHECK(q.scales == std::vector<double>{1.0});
    CHECK(q.zero_points == std::vector<double>{0.0});
    CHECK(q.codes == std::vector<std::int32_t>{0, 1, 2, 3});
    CHECK(rtn_dequantize(q) == w);
}

TEST_CASE("constant group dequantizes exactly") {
    const Matrix w(1, 3, {5, 5, 5});
    const auto q = rtn_quantize(w, 4, 64);
    CHECK(q.codes == std::vector<std::int32_t>{0, 0, 0});
    CHECK(rtn_dequantize(q) == w);
    const Matrix neg(2, 2, {-0.25, -0.25, 0.0, 0.0});
    CHECK(fake_quantize(neg, 2, 2) == neg);
}

TEST_CASE("all-zero codes with zero offset give a zero matrix") {
    QuantizedTensor q;
    q.rows = 2;
    q.cols = 3;
    q.bits = 2;
    q.group_size = 2;
    q.codes.assign(6, 0);
    q.scales.assign(4, 0.7);
    q.zero_points.assign(4, 0.0);
    CHECK(rtn_dequantize(q) == Matrix(2, 3));
}

TEST_CASE("per-group error is bounded by half a step") {
    std::mt19937_64 rng(42);
    for (int bits : {2, 4}) {
        for (std::size_t g : {7u, 32u, 64u}) {
            const Matrix w = oracle::gaussian(16, 150, rng);
            const auto q = rtn_quantize(w, bits, g);
            const Matrix r = rtn_dequantize(q);
            for (std::size_t row = 0; row < w.rows(); ++row)
                for (std::size_t col = 0; col < w.cols(); ++col) {
                    const double s = q.scales[row * q.groups_per_row() + col / g];
                    CHECK(std::abs(w(row, col) - r(row, col)) <= s / 2 + 1e-12);
                }
        }
    }
}

TEST_CASE("quantization is idempotent") {
    std::mt19937_64 rng(6);
    const Matrix w = oracle::gaussian(8, 100, rng);
    for (int bits : {2, 4}) {
        const Matrix once = fake_quantize(w, bits, 64);
        const Matrix twice = fake_quantize(once, bits, 64);
        for (std::size_t i = 0; i < w.size(); ++i)
            CHECK(twice.values()[i] == doctest::Approx(once.values()[i]).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("quantizer argument checks") {
    CHECK_THROWS_AS(rtn_quantize(Matrix(1, 4), 3, 64), Error);
    CHECK_THROWS_AS(rtn_quantize(Matrix(1, 4), 4, 0), Error);
}

TEST_CASE("apply_plan quantizes layer tensors only") {
    SynthShape shape;
    shape.num_layers = 3;
    const ArchConfig c = make_arch_config(shape);
    const TensorStore store = synth_model(c, 11, {});
    BitAllocationPlan plan = uniform_plan(3, 2);
    plan.bits[1] = 4;
    const PlanApplication applied = apply_plan_detailed(store, c, plan);
    CHECK(applied.store.size() == store.size());
    std::set<std::string> layer_names;
    for (std::size_t l = 0; l < 3; ++l)
        for (TensorKind k : layer_tensor_kinds(c.has_gate)) layer_names.insert(c.tensor_name(k, l));
    for (const auto& [name, t] : store) {
        if (layer_names.contains(name)) {
            CHECK(!(applied.store.at(name).value == t.value));
        } else {
            CHECK(applied.store.at(name) == t);
        }
    }
    CHECK(applied.layer_squared_error[1] < applied.layer_squared_error[0]);
    Matrix expected = fake_quantize(store.matrix(c.tensor_name(TensorKind::q, 1)), 4, 64);
    for (double& v : expected.values()) v = round_to_dtype(v, DType::f32);
    CHECK(applied.store.matrix(c.tensor_name(TensorKind::q, 1)) == expected);

    CHECK_THROWS_AS(apply_plan(store, c, uniform_plan(2, 4)), Error);
}

TEST_CASE("all-4-bit plan beats all-2-bit plan") {
    SynthShape shape;
    shape.num_layers = 2;
    const ArchConfig c = make_arch_config(shape);
    const TensorStore store = synth_model(c, 12, {});
    CHECK(store_error(store, apply_plan(store, c, uniform_plan(2, 4))) <
          store_error(store, apply_plan(store, c, uniform_plan(2, 2))));
}
