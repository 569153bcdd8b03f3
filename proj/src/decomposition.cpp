#include "nsds/decomposition.hpp"

#include <string>

#include "nsds/error.hpp"

namespace nsds {
namespace {

constexpr std::string_view kModule = "decomposition";

void shape_check(bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::shape, std::string(kModule), msg);
}

std::string dims(const Matrix& m) { return "[" + std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + "]"; }

}  // namespace

Role role(ComponentKind kind) {
    switch (kind) {
        case ComponentKind::qk:
        case ComponentKind::ffn_in:
        case ComponentKind::ffn_gate: return Role::detector;
        case ComponentKind::ov:
        case ComponentKind::ffn_out: return Role::writer;
    }
    return Role::detector;
}

std::string_view to_string(ComponentKind kind) {
    switch (kind) {
        case ComponentKind::qk: return "QK";
        case ComponentKind::ov: return "OV";
        case ComponentKind::ffn_in: return "FFN_IN";
        case ComponentKind::ffn_out: return "FFN_OUT";
        case ComponentKind::ffn_gate: return "FFN_GATE";
    }
    return "?";
}

std::optional<ComponentKind> parse_component_kind(std::string_view name) {
    for (ComponentKind k : component_kinds(true))
        if (to_string(k) == name) return k;
    return std::nullopt;
}

std::vector<ComponentKind> component_kinds(bool has_gate) {
    std::vector<ComponentKind> kinds{ComponentKind::qk, ComponentKind::ov, ComponentKind::ffn_in,
                                     ComponentKind::ffn_out};
    if (has_gate) kinds.push_back(ComponentKind::ffn_gate);
    return kinds;
}

std::vector<ComponentKind> LayerComponents::kinds() const { return component_kinds(ffn_gate.has_value()); }

std::vector<Matrix> split_output_projection(const Matrix& w_o, std::size_t num_heads, std::size_t d_head) {
    shape_check(num_heads > 0 && d_head > 0, "num_heads and d_head must be positive");
    shape_check(w_o.rows() == num_heads * d_head, "W_O has " + std::to_string(w_o.rows()) + " rows, expected " +
                                                      std::to_string(num_heads) + " x " + std::to_string(d_head));
    std::vector<Matrix> heads;
    heads.reserve(num_heads);
    for (std::size_t h = 0; h < num_heads; ++h) heads.push_back(w_o.row_block(h * d_head, d_head));
    return heads;
}

std::vector<Matrix> broadcast_kv(const std::vector<Matrix>& kv_heads, std::size_t group_size) {
    if (group_size == 0) fail(ErrorKind::config, std::string(kModule), "group size must be positive");
    std::vector<Matrix> out;
    out.reserve(kv_heads.size() * group_size);
    for (std::size_t i = 0; i < kv_heads.size() * group_size; ++i) out.push_back(kv_heads[i / group_size]);
    return out;
}

Matrix build_qk(const Matrix& wq_head, const Matrix& wk_head) {
    shape_check(wq_head.cols() == wk_head.cols() && wq_head.rows() == wk_head.rows(),
                "query factor " + dims(wq_head) + " and key factor " + dims(wk_head) + " disagree");
    Matrix out(wq_head.rows(), wk_head.rows());
    out.eigen().noalias() = wq_head.eigen() * wk_head.eigen().transpose();
    return out;
}

Matrix build_ov(const Matrix& wv_head, const Matrix& wo_head) {
    shape_check(wv_head.cols() == wo_head.rows(),
                "value factor " + dims(wv_head) + " and output factor " + dims(wo_head) + " disagree");
    return matmul(wv_head, wo_head);
}

std::vector<Matrix> split_heads(const Matrix& stored, std::size_t heads, std::size_t d_head) {
    shape_check(stored.rows() == heads * d_head, "projection has " + std::to_string(stored.rows()) +
                                                     " rows, expected " + std::to_string(heads * d_head));
    std::vector<Matrix> out;
    out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) out.push_back(stored.row_block(h * d_head, d_head).transposed());
    return out;
}

LayerComponents decompose_layer(const TensorStore& store, const ArchConfig& c, std::size_t layer) {
    if (layer >= c.num_layers) {
        fail(ErrorKind::range, std::string(kModule),
             "layer " + std::to_string(layer) + " out of range for " + std::to_string(c.num_layers) + " layers");
    }
    auto fetch = [&](TensorKind kind) -> const Matrix& {
        const std::string name = c.tensor_name(kind, layer);
        if (!store.contains(name)) {
            fail(ErrorKind::resolution, std::string(kModule),
                 "tensor '" + name + "' for template " + std::string(to_string(kind)) + " (" +
                     c.name_templates.at(kind) + ") is missing");
        }
        return store.matrix(name);
    };

    const auto wq = split_heads(fetch(TensorKind::q), c.num_heads, c.d_head);
    const auto wk = broadcast_kv(split_heads(fetch(TensorKind::k), c.num_kv_heads, c.d_head), c.group_size());
    const auto wv = broadcast_kv(split_heads(fetch(TensorKind::v), c.num_kv_heads, c.d_head), c.group_size());
    const auto wo = split_output_projection(fetch(TensorKind::o).transposed(), c.num_heads, c.d_head);

    LayerComponents lc;
    lc.layer_index = layer;
    lc.qk_heads.reserve(c.num_heads);
    lc.ov_heads.reserve(c.num_heads);
    for (std::size_t h = 0; h < c.num_heads; ++h) {
        lc.qk_heads.push_back(build_qk(wq[h], wk[h]));
        lc.ov_heads.push_back(build_ov(wv[h], wo[h]));
    }
    lc.ffn_in = fetch(TensorKind::ffn_in).transposed();
    lc.ffn_out = fetch(TensorKind::ffn_out).transposed();
    if (c.has_gate) lc.ffn_gate = fetch(TensorKind::ffn_gate).transposed();
    return lc;
}

}  // namespace nsds
