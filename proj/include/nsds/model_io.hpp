#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsds/matrix.hpp"

namespace nsds {

enum class DType { f16, bf16, f32, f64 };

std::string_view to_string(DType dtype);
std::optional<DType> parse_dtype(std::string_view name);
std::size_t element_size(DType dtype);

// Round-to-nearest-even encoders for the narrow storage formats; decoding is
// exact. Values beyond the format range encode to infinity.
std::uint16_t encode_f16(double value);
double decode_f16(std::uint16_t bits);
std::uint16_t encode_bf16(double value);
double decode_bf16(std::uint16_t bits);

// Nearest value representable in `dtype`.
double round_to_dtype(double value, DType dtype);

// Kinds of tensor the architecture config knows how to name.
enum class TensorKind { q, k, v, o, ffn_in, ffn_out, ffn_gate, unembedding, embedding };

std::string_view to_string(TensorKind kind);
std::optional<TensorKind> parse_tensor_kind(std::string_view name);

// Per-layer weight matrices, in checkpoint order.
std::vector<TensorKind> layer_tensor_kinds(bool has_gate);

struct ArchConfig {
    std::size_t num_layers = 0;
    std::size_t num_heads = 0;
    std::size_t num_kv_heads = 0;
    std::size_t d_model = 0;
    std::size_t d_head = 0;
    std::size_t d_ffn = 0;
    std::size_t vocab_size = 0;
    bool has_gate = true;
    bool tied_embeddings = false;
    // Patterns use "{l}" as the layer-index placeholder.
    std::map<TensorKind, std::string> name_templates = default_templates();

    static std::map<TensorKind, std::string> default_templates();

    // Throws ErrorKind::config on any violated invariant.
    void validate() const;

    std::string tensor_name(TensorKind kind, std::size_t layer = 0) const;

    std::size_t group_size() const { return num_heads / num_kv_heads; }
    std::size_t q_dim() const { return num_heads * d_head; }
    std::size_t kv_dim() const { return num_kv_heads * d_head; }

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

nlohmann::json to_json(const ArchConfig& config);
// Unknown keys are rejected; missing name_templates entries fall back to defaults.
ArchConfig arch_config_from_json(const nlohmann::json& j);
ArchConfig load_arch_config(const std::filesystem::path& path);
void save_arch_config(const ArchConfig& config, const std::filesystem::path& path);
// SHA-256 hex digest of the canonical JSON form.
std::string config_digest(const ArchConfig& config);

struct Tensor {
    Matrix value;
    DType source_dtype = DType::f32;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Named weight matrices. Iteration is in name order. Matrices are stored in
// checkpoint orientation: output features x input features.
class TensorStore {
public:
    void insert(std::string name, Tensor tensor);

    bool contains(const std::string& name) const { return tensors_.contains(name); }
    const Tensor& at(const std::string& name) const;
    const Matrix& matrix(const std::string& name) const { return at(name).value; }

    std::size_t size() const { return tensors_.size(); }
    bool empty() const { return tensors_.empty(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

    friend bool operator==(const TensorStore&, const TensorStore&) = default;

private:
    std::map<std::string, Tensor> tensors_;
};

// Container layout: u64 little-endian header length N, N bytes of JSON
// {name: {"dtype", "shape", "data_offsets"}}, then the raw little-endian
// payloads. Offsets are relative to the end of the header. A top-level
// "__metadata__" entry is accepted and ignored.
TensorStore load_container(const std::filesystem::path& path);
TensorStore parse_container(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_container(const TensorStore& store);
// Each tensor is written in its source_dtype.
void write_container(const TensorStore& store, const std::filesystem::path& path);

// Checks that every tensor the config names for layers 0..L-1 exists with the
// shape the config implies, and that an unembedding can be resolved.
void validate_store(const TensorStore& store, const ArchConfig& config);

// W_U in right-multiplication orientation (d_model x vocab). Falls back to the
// transposed embedding when embeddings are tied and no unembedding is stored.
Matrix resolve_unembedding(const TensorStore& store, const ArchConfig& config);

}  // namespace nsds
