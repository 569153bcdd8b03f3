#pragma once

#include <cstdint>
#include <set>

#include <nlohmann/json.hpp>

#include "nsds/model_io.hpp"

namespace nsds {

// Per-layer weight statistics for synthetic checkpoints. Layers not listed
// anywhere get i.i.d. normal weights.
struct SynthProfile {
    // Student-t with 3 degrees of freedom, rescaled to the gaussian variance.
    std::set<std::size_t> heavy_tail;
    // Every weight matrix of the layer is a product of rank-`rank` factors,
    // rescaled to the gaussian Frobenius norm.
    std::set<std::size_t> low_rank;
    std::size_t rank = 2;

    friend bool operator==(const SynthProfile&, const SynthProfile&) = default;
};

// Accepts "gaussian", {} or {"heavy_tail": [..], "low_rank": {"layers": [..], "rank": r}}.
SynthProfile synth_profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthProfile& profile);

struct SynthShape {
    std::size_t num_layers = 8;
    std::size_t d_model = 64;
    std::size_t num_heads = 4;
    std::size_t num_kv_heads = 4;
    std::size_t d_head = 16;
    std::size_t d_ffn = 256;
    std::size_t vocab_size = 256;
    bool has_gate = true;
    bool tied_embeddings = false;
};

ArchConfig make_arch_config(const SynthShape& shape);

// Deterministic in (config, seed, profile, dtype). Values are rounded to
// `dtype` so a container round trip reproduces the store exactly.
TensorStore synth_model(const ArchConfig& config, std::uint64_t seed, const SynthProfile& profile,
                        DType dtype = DType::f32);

}  // namespace nsds
