#include "nsds/synth.hpp"

#include <cmath>
#include <random>

#include "nsds/error.hpp"

namespace nsds {
namespace {

constexpr std::string_view kModule = "model_io";

std::set<std::size_t> layer_set(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array()) fail(ErrorKind::validation, std::string(kModule), what + " must be an array of layer indices");
    std::set<std::size_t> out;
    for (const auto& v : j) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
            fail(ErrorKind::validation, std::string(kModule), what + " entries must be non-negative integers");
        }
        out.insert(v.get<std::size_t>());
    }
    return out;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= std::uint8_t(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::mt19937_64 tensor_rng(std::uint64_t seed, std::string_view name) {
    const std::uint64_t h = fnv1a(name);
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(h), std::uint32_t(h >> 32)};
    return std::mt19937_64(seq);
}

struct Sampler {
    bool heavy = false;
    double stddev = 1.0;

    double operator()(std::mt19937_64& rng) {
        if (heavy) return student(rng) * stddev / std::sqrt(3.0);
        return normal(rng) * stddev;
    }

    std::normal_distribution<double> normal{0.0, 1.0};
    std::student_t_distribution<double> student{3.0};
};

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, Sampler& sample) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = sample(rng);
    return m;
}

Matrix weight(std::string_view name, std::size_t rows, std::size_t cols, std::uint64_t seed, bool heavy,
              std::optional<std::size_t> rank) {
    auto rng = tensor_rng(seed, name);
    const double stddev = 1.0 / std::sqrt(double(cols));
    Sampler sample{heavy, stddev};
    if (!rank) return random_matrix(rows, cols, rng, sample);

    const std::size_t r = std::min({*rank, rows, cols});
    Matrix m = matmul(random_matrix(rows, r, rng, sample), random_matrix(r, cols, rng, sample));
    const double norm = m.eigen().norm();
    const double target = stddev * std::sqrt(double(rows * cols));
    if (norm > 0.0) m.eigen() *= target / norm;
    return m;
}

void round_values(Matrix& m, DType dtype) {
    for (double& v : m.values()) v = round_to_dtype(v, dtype);
}

}  // namespace

SynthProfile synth_profile_from_json(const nlohmann::json& j) {
    SynthProfile p;
    if (j.is_string()) {
        if (j.get<std::string>() != "gaussian") {
            fail(ErrorKind::validation, std::string(kModule), "unknown profile '" + j.get<std::string>() + "'");
        }
        return p;
    }
    if (!j.is_object()) fail(ErrorKind::validation, std::string(kModule), "profile must be a string or object");
    for (const auto& [key, value] : j.items()) {
        if (key == "heavy_tail") {
            p.heavy_tail = layer_set(value, "heavy_tail");
        } else if (key == "low_rank") {
            if (value.is_array()) {
                p.low_rank = layer_set(value, "low_rank");
                continue;
            }
            if (!value.is_object()) fail(ErrorKind::validation, std::string(kModule), "low_rank must be an object");
            for (const auto& [k, v] : value.items()) {
                if (k == "layers") {
                    p.low_rank = layer_set(v, "low_rank.layers");
                } else if (k == "rank") {
                    if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
                        fail(ErrorKind::validation, std::string(kModule), "low_rank.rank must be a positive integer");
                    }
                    p.rank = v.get<std::size_t>();
                } else {
                    fail(ErrorKind::validation, std::string(kModule), "unknown low_rank key '" + k + "'");
                }
            }
        } else {
            fail(ErrorKind::validation, std::string(kModule), "unknown profile key '" + key + "'");
        }
    }
    return p;
}

nlohmann::json to_json(const SynthProfile& p) {
    nlohmann::json j = nlohmann::json::object();
    if (!p.heavy_tail.empty()) j["heavy_tail"] = p.heavy_tail;
    if (!p.low_rank.empty()) j["low_rank"] = {{"layers", p.low_rank}, {"rank", p.rank}};
    return j;
}

ArchConfig make_arch_config(const SynthShape& s) {
    ArchConfig c;
    c.num_layers = s.num_layers;
    c.d_model = s.d_model;
    c.num_heads = s.num_heads;
    c.num_kv_heads = s.num_kv_heads;
    c.d_head = s.d_head;
    c.d_ffn = s.d_ffn;
    c.vocab_size = s.vocab_size;
    c.has_gate = s.has_gate;
    c.tied_embeddings = s.tied_embeddings;
    c.validate();
    return c;
}

TensorStore synth_model(const ArchConfig& c, std::uint64_t seed, const SynthProfile& profile, DType dtype) {
    c.validate();
    for (const auto* set : {&profile.heavy_tail, &profile.low_rank}) {
        for (std::size_t l : *set) {
            if (l >= c.num_layers) {
                fail(ErrorKind::range, std::string(kModule),
                     "profile layer " + std::to_string(l) + " out of range for " + std::to_string(c.num_layers) +
                         " layers");
            }
        }
    }

    TensorStore store;
    auto add = [&](std::string name, Matrix m) {
        round_values(m, dtype);
        store.insert(std::move(name), Tensor{std::move(m), dtype});
    };

    for (std::size_t l = 0; l < c.num_layers; ++l) {
        const bool heavy = profile.heavy_tail.contains(l);
        const std::optional<std::size_t> rank =
            profile.low_rank.contains(l) ? std::optional<std::size_t>(profile.rank) : std::nullopt;
        auto layer_weight = [&](TensorKind kind, std::size_t rows, std::size_t cols) {
            const std::string name = c.tensor_name(kind, l);
            add(name, weight(name, rows, cols, seed, heavy, rank));
        };
        layer_weight(TensorKind::q, c.q_dim(), c.d_model);
        layer_weight(TensorKind::k, c.kv_dim(), c.d_model);
        layer_weight(TensorKind::v, c.kv_dim(), c.d_model);
        layer_weight(TensorKind::o, c.d_model, c.q_dim());
        if (c.has_gate) layer_weight(TensorKind::ffn_gate, c.d_ffn, c.d_model);
        layer_weight(TensorKind::ffn_in, c.d_ffn, c.d_model);
        layer_weight(TensorKind::ffn_out, c.d_model, c.d_ffn);

        const std::string norm_name = "model.layers." + std::to_string(l) + ".input_layernorm.weight";
        auto rng = tensor_rng(seed, norm_name);
        std::normal_distribution<double> jitter(0.0, 0.01);
        Matrix norm(1, c.d_model);
        for (double& v : norm.values()) v = 1.0 + jitter(rng);
        add(norm_name, std::move(norm));
    }

    const std::string embed = c.tensor_name(TensorKind::embedding);
    add(embed, weight(embed, c.vocab_size, c.d_model, seed, false, std::nullopt));
    if (!c.tied_embeddings) {
        const std::string unembed = c.tensor_name(TensorKind::unembedding);
        add(unembed, weight(unembed, c.vocab_size, c.d_model, seed, false, std::nullopt));
    }
    auto rng = tensor_rng(seed, "model.norm.weight");
    std::normal_distribution<double> jitter(0.0, 0.01);
    Matrix final_norm(1, c.d_model);
    for (double& v : final_norm.values()) v = 1.0 + jitter(rng);
    add("model.norm.weight", std::move(final_norm));
    return store;
}

}  // namespace nsds
