#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "nsds/matrix.hpp"
#include "nsds/model_io.hpp"

namespace nsds {

enum class ComponentKind { qk, ov, ffn_in, ffn_out, ffn_gate };
enum class Role { detector, writer };

Role role(ComponentKind kind);
std::string_view to_string(ComponentKind kind);
std::optional<ComponentKind> parse_component_kind(std::string_view name);

// Mechanistic components of one layer, in right-multiplication orientation
// (activations are row vectors, y = x W):
//   qk_heads[h] = Wq_h Wk_h^T   (d_model x d_model)
//   ov_heads[h] = Wv_h Wo_h     (d_model x d_model)
//   ffn_in, ffn_gate            (d_model x d_ffn)
//   ffn_out                     (d_ffn x d_model)
struct LayerComponents {
    std::size_t layer_index = 0;
    std::vector<Matrix> qk_heads;
    std::vector<Matrix> ov_heads;
    Matrix ffn_in;
    Matrix ffn_out;
    std::optional<Matrix> ffn_gate;

    // Present kinds in canonical order: QK, OV, FFN_IN, FFN_OUT[, FFN_GATE].
    std::vector<ComponentKind> kinds() const;
};

std::vector<ComponentKind> component_kinds(bool has_gate);

// Splits W_O (H*d_head x d_model) into H contiguous d_head-row blocks.
std::vector<Matrix> split_output_projection(const Matrix& w_o, std::size_t num_heads, std::size_t d_head);

// output[i] = kv_heads[i / group_size].
std::vector<Matrix> broadcast_kv(const std::vector<Matrix>& kv_heads, std::size_t group_size);

Matrix build_qk(const Matrix& wq_head, const Matrix& wk_head);
Matrix build_ov(const Matrix& wv_head, const Matrix& wo_head);

// Per-head factors in right-multiplication orientation (d_model x d_head),
// sliced from a stored [heads*d_head x d_model] projection.
std::vector<Matrix> split_heads(const Matrix& stored_projection, std::size_t heads, std::size_t d_head);

LayerComponents decompose_layer(const TensorStore& store, const ArchConfig& config, std::size_t layer);

}  // namespace nsds
