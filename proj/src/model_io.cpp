#include "nsds/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include <openssl/evp.h>

#include "nsds/error.hpp"

namespace nsds {
namespace {

constexpr std::string_view kModule = "model_io";

[[noreturn]] void io_fail(ErrorKind kind, const std::string& msg) { fail(kind, std::string(kModule), msg); }

// Generic IEEE-style binary encoder with `exp_bits` exponent and `mant_bits`
// fraction bits, round-to-nearest-even.
std::uint32_t encode_narrow(double value, int exp_bits, int mant_bits) {
    const std::uint32_t sign = std::signbit(value) ? (1u << (exp_bits + mant_bits)) : 0u;
    const std::uint32_t exp_all_ones = (1u << exp_bits) - 1u;
    if (std::isnan(value)) return sign | (exp_all_ones << mant_bits) | (1u << (mant_bits - 1));
    const double mag = std::fabs(value);
    const int bias = (1 << (exp_bits - 1)) - 1;
    const int emin = 1 - bias;
    if (std::isinf(mag)) return sign | (exp_all_ones << mant_bits);
    if (mag == 0.0) return sign;

    int ex = 0;
    std::frexp(mag, &ex);
    int e = ex - 1;  // mag in [2^e, 2^(e+1))
    if (e < emin) {
        // Subnormal; a rounded-up result of 2^mant_bits is the smallest normal.
        const double q = std::nearbyint(std::ldexp(mag, mant_bits - emin));
        return sign | std::uint32_t(q);
    }
    double q = std::nearbyint((std::ldexp(mag, -e) - 1.0) * std::ldexp(1.0, mant_bits));
    if (q >= std::ldexp(1.0, mant_bits)) {
        q = 0.0;
        ++e;
    }
    if (e > bias) return sign | (exp_all_ones << mant_bits);
    return sign | (std::uint32_t(e + bias) << mant_bits) | std::uint32_t(q);
}

double decode_narrow(std::uint32_t bits, int exp_bits, int mant_bits) {
    const bool negative = (bits >> (exp_bits + mant_bits)) & 1u;
    const std::uint32_t exp_field = (bits >> mant_bits) & ((1u << exp_bits) - 1u);
    const std::uint32_t mant = bits & ((1u << mant_bits) - 1u);
    const int bias = (1 << (exp_bits - 1)) - 1;
    double mag = 0.0;
    if (exp_field == 0) {
        mag = std::ldexp(double(mant), 1 - bias - mant_bits);
    } else if (exp_field == (1u << exp_bits) - 1u) {
        mag = mant == 0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
    } else {
        mag = std::ldexp(1.0 + std::ldexp(double(mant), -mant_bits), int(exp_field) - bias);
    }
    return negative ? -mag : mag;
}

template <typename T>
T read_le(const std::uint8_t* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<std::uint8_t*>(&v);
        std::reverse(b, b + sizeof(T));
    }
    return v;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
}

double decode_element(const std::uint8_t* p, DType dtype) {
    switch (dtype) {
        case DType::f16: return decode_f16(read_le<std::uint16_t>(p));
        case DType::bf16: return decode_bf16(read_le<std::uint16_t>(p));
        case DType::f32: return double(std::bit_cast<float>(read_le<std::uint32_t>(p)));
        case DType::f64: return std::bit_cast<double>(read_le<std::uint64_t>(p));
    }
    return 0.0;
}

void encode_element(std::vector<std::uint8_t>& out, double v, DType dtype) {
    switch (dtype) {
        case DType::f16: append_le(out, encode_f16(v)); break;
        case DType::bf16: append_le(out, encode_bf16(v)); break;
        case DType::f32: append_le(out, std::bit_cast<std::uint32_t>(float(v))); break;
        case DType::f64: append_le(out, std::bit_cast<std::uint64_t>(v)); break;
    }
}

std::size_t json_size(const nlohmann::json& j, const std::string& what) {
    if (!j.is_number_unsigned()) {
        if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::size_t>();
        io_fail(ErrorKind::parse, what + " must be a non-negative integer");
    }
    return j.get<std::size_t>();
}

}  // namespace

std::string_view to_string(DType dtype) {
    switch (dtype) {
        case DType::f16: return "F16";
        case DType::bf16: return "BF16";
        case DType::f32: return "F32";
        case DType::f64: return "F64";
    }
    return "?";
}

std::optional<DType> parse_dtype(std::string_view name) {
    if (name == "F16") return DType::f16;
    if (name == "BF16") return DType::bf16;
    if (name == "F32") return DType::f32;
    if (name == "F64") return DType::f64;
    return std::nullopt;
}

std::size_t element_size(DType dtype) {
    switch (dtype) {
        case DType::f16:
        case DType::bf16: return 2;
        case DType::f32: return 4;
        case DType::f64: return 8;
    }
    return 0;
}

std::uint16_t encode_f16(double value) { return std::uint16_t(encode_narrow(value, 5, 10)); }
double decode_f16(std::uint16_t bits) { return decode_narrow(bits, 5, 10); }
std::uint16_t encode_bf16(double value) { return std::uint16_t(encode_narrow(value, 8, 7)); }
double decode_bf16(std::uint16_t bits) { return decode_narrow(bits, 8, 7); }

double round_to_dtype(double value, DType dtype) {
    switch (dtype) {
        case DType::f16: return decode_f16(encode_f16(value));
        case DType::bf16: return decode_bf16(encode_bf16(value));
        case DType::f32: return double(float(value));
        case DType::f64: return value;
    }
    return value;
}

std::string_view to_string(TensorKind kind) {
    switch (kind) {
        case TensorKind::q: return "q";
        case TensorKind::k: return "k";
        case TensorKind::v: return "v";
        case TensorKind::o: return "o";
        case TensorKind::ffn_in: return "ffn_in";
        case TensorKind::ffn_out: return "ffn_out";
        case TensorKind::ffn_gate: return "ffn_gate";
        case TensorKind::unembedding: return "unembedding";
        case TensorKind::embedding: return "embedding";
    }
    return "?";
}

std::optional<TensorKind> parse_tensor_kind(std::string_view name) {
    for (TensorKind k : {TensorKind::q, TensorKind::k, TensorKind::v, TensorKind::o, TensorKind::ffn_in,
                         TensorKind::ffn_out, TensorKind::ffn_gate, TensorKind::unembedding, TensorKind::embedding}) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

std::vector<TensorKind> layer_tensor_kinds(bool has_gate) {
    std::vector<TensorKind> kinds{TensorKind::q, TensorKind::k, TensorKind::v, TensorKind::o};
    if (has_gate) kinds.push_back(TensorKind::ffn_gate);
    kinds.push_back(TensorKind::ffn_in);
    kinds.push_back(TensorKind::ffn_out);
    return kinds;
}

std::map<TensorKind, std::string> ArchConfig::default_templates() {
    return {
        {TensorKind::q, "model.layers.{l}.self_attn.q_proj.weight"},
        {TensorKind::k, "model.layers.{l}.self_attn.k_proj.weight"},
        {TensorKind::v, "model.layers.{l}.self_attn.v_proj.weight"},
        {TensorKind::o, "model.layers.{l}.self_attn.o_proj.weight"},
        {TensorKind::ffn_in, "model.layers.{l}.mlp.up_proj.weight"},
        {TensorKind::ffn_out, "model.layers.{l}.mlp.down_proj.weight"},
        {TensorKind::ffn_gate, "model.layers.{l}.mlp.gate_proj.weight"},
        {TensorKind::unembedding, "lm_head.weight"},
        {TensorKind::embedding, "model.embed_tokens.weight"},
    };
}

void ArchConfig::validate() const {
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) io_fail(ErrorKind::config, msg);
    };
    check(num_layers > 0, "num_layers must be positive");
    check(num_heads > 0, "num_heads must be positive");
    check(num_kv_heads > 0, "num_kv_heads must be positive");
    check(d_model > 0, "d_model must be positive");
    check(d_head > 0, "d_head must be positive");
    check(d_ffn > 0, "d_ffn must be positive");
    check(vocab_size > 0, "vocab_size must be positive");
    check(num_heads % num_kv_heads == 0, "num_heads (" + std::to_string(num_heads) +
                                             ") is not a multiple of num_kv_heads (" +
                                             std::to_string(num_kv_heads) + ")");
    for (TensorKind kind : layer_tensor_kinds(has_gate)) {
        auto it = name_templates.find(kind);
        check(it != name_templates.end() && !it->second.empty(),
              "missing name template for " + std::string(to_string(kind)));
        check(it->second.find("{l}") != std::string::npos,
              "template for " + std::string(to_string(kind)) + " lacks the {l} placeholder");
    }
    const auto& unemb = tied_embeddings ? TensorKind::embedding : TensorKind::unembedding;
    check(name_templates.contains(unemb), "missing name template for " + std::string(to_string(unemb)));
}

std::string ArchConfig::tensor_name(TensorKind kind, std::size_t layer) const {
    auto it = name_templates.find(kind);
    if (it == name_templates.end()) {
        io_fail(ErrorKind::resolution, "no name template for " + std::string(to_string(kind)));
    }
    std::string name = it->second;
    const std::string index = std::to_string(layer);
    for (std::size_t pos = name.find("{l}"); pos != std::string::npos; pos = name.find("{l}", pos + index.size())) {
        name.replace(pos, 3, index);
    }
    return name;
}

nlohmann::json to_json(const ArchConfig& c) {
    nlohmann::json templates = nlohmann::json::object();
    for (const auto& [kind, pattern] : c.name_templates) templates[std::string(to_string(kind))] = pattern;
    return {
        {"num_layers", c.num_layers},   {"num_heads", c.num_heads},   {"num_kv_heads", c.num_kv_heads},
        {"d_model", c.d_model},         {"d_head", c.d_head},         {"d_ffn", c.d_ffn},
        {"vocab_size", c.vocab_size},   {"has_gate", c.has_gate},     {"tied_embeddings", c.tied_embeddings},
        {"name_templates", templates},
    };
}

ArchConfig arch_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) io_fail(ErrorKind::config, "architecture config must be a JSON object");
    static const std::set<std::string> known{"num_layers", "num_heads",  "num_kv_heads",    "d_model",
                                             "d_head",     "d_ffn",      "vocab_size",      "has_gate",
                                             "tied_embeddings", "name_templates"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) io_fail(ErrorKind::config, "unknown config key '" + key + "'");
    }
    ArchConfig c;
    auto count = [&](const char* key) -> std::size_t {
        if (!j.contains(key)) io_fail(ErrorKind::config, std::string("missing config key '") + key + "'");
        const auto& v = j.at(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) {
            io_fail(ErrorKind::config, std::string("'") + key + "' must be a positive integer");
        }
        return v.get<std::size_t>();
    };
    auto flag = [&](const char* key, bool fallback) {
        if (!j.contains(key)) return fallback;
        if (!j.at(key).is_boolean()) io_fail(ErrorKind::config, std::string("'") + key + "' must be a boolean");
        return j.at(key).get<bool>();
    };
    c.num_layers = count("num_layers");
    c.num_heads = count("num_heads");
    c.num_kv_heads = j.contains("num_kv_heads") ? count("num_kv_heads") : c.num_heads;
    c.d_model = count("d_model");
    c.d_head = count("d_head");
    c.d_ffn = count("d_ffn");
    c.vocab_size = count("vocab_size");
    c.has_gate = flag("has_gate", true);
    c.tied_embeddings = flag("tied_embeddings", false);
    if (j.contains("name_templates")) {
        const auto& t = j.at("name_templates");
        if (!t.is_object()) io_fail(ErrorKind::config, "name_templates must be an object");
        for (const auto& [key, value] : t.items()) {
            auto kind = parse_tensor_kind(key);
            if (!kind) io_fail(ErrorKind::config, "unknown template kind '" + key + "'");
            if (!value.is_string()) io_fail(ErrorKind::config, "template '" + key + "' must be a string");
            c.name_templates[*kind] = value.get<std::string>();
        }
    }
    c.validate();
    return c;
}

ArchConfig load_arch_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) io_fail(ErrorKind::io, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        io_fail(ErrorKind::parse, "config " + path.string() + " at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    return arch_config_from_json(j);
}

void save_arch_config(const ArchConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail(ErrorKind::io, "cannot write config " + path.string());
    out << to_json(config).dump(2) << '\n';
    if (!out) io_fail(ErrorKind::io, "failed writing config " + path.string());
}

std::string config_digest(const ArchConfig& config) {
    const std::string canonical = to_json(config).dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(canonical.data(), canonical.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        io_fail(ErrorKind::numerical, "SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

void TensorStore::insert(std::string name, Tensor tensor) {
    if (name.empty()) io_fail(ErrorKind::validation, "tensor name must be non-empty");
    tensors_.insert_or_assign(std::move(name), std::move(tensor));
}

const Tensor& TensorStore::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) io_fail(ErrorKind::resolution, "tensor '" + name + "' not found");
    return it->second;
}

TensorStore parse_container(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) {
        io_fail(ErrorKind::parse, "at byte 0: file too short for the 8-byte header length");
    }
    const std::uint64_t header_len = read_le<std::uint64_t>(bytes.data());
    if (header_len > bytes.size() - 8) {
        io_fail(ErrorKind::parse, "at byte 0: header length " + std::to_string(header_len) +
                                      " exceeds file size " + std::to_string(bytes.size()));
    }
    const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + 8);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_begin, header_begin + header_len);
    } catch (const nlohmann::json::parse_error& e) {
        io_fail(ErrorKind::parse, "at byte " + std::to_string(8 + e.byte) + ": malformed header JSON");
    }
    if (!header.is_object()) io_fail(ErrorKind::parse, "at byte 8: header must be a JSON object");

    const std::span<const std::uint8_t> payload = bytes.subspan(8 + header_len);
    struct Extent {
        std::size_t begin, end;
        std::string name;
    };
    std::vector<Extent> extents;
    TensorStore store;
    for (const auto& [name, entry] : header.items()) {
        if (name == "__metadata__") continue;
        if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
            !entry.contains("data_offsets")) {
            io_fail(ErrorKind::parse, "at byte 8: entry '" + name + "' needs dtype, shape and data_offsets");
        }
        if (!entry.at("dtype").is_string()) io_fail(ErrorKind::parse, "at byte 8: dtype of '" + name + "' must be a string");
        const auto dtype = parse_dtype(entry.at("dtype").get<std::string>());
        if (!dtype) {
            io_fail(ErrorKind::unsupported_dtype,
                    "tensor '" + name + "' has unsupported dtype " + entry.at("dtype").get<std::string>());
        }
        const auto& shape = entry.at("shape");
        if (!shape.is_array() || shape.empty() || shape.size() > 2) {
            io_fail(ErrorKind::parse, "at byte 8: shape of '" + name + "' must have 1 or 2 dims");
        }
        const std::size_t rows = shape.size() == 2 ? json_size(shape[0], "shape") : 1;
        const std::size_t cols = json_size(shape.back(), "shape");
        const auto& offsets = entry.at("data_offsets");
        if (!offsets.is_array() || offsets.size() != 2) {
            io_fail(ErrorKind::parse, "at byte 8: data_offsets of '" + name + "' must be [begin, end]");
        }
        const std::size_t begin = json_size(offsets[0], "data_offsets");
        const std::size_t end = json_size(offsets[1], "data_offsets");
        if (begin > end || end > payload.size()) {
            io_fail(ErrorKind::integrity, "tensor '" + name + "' extent [" + std::to_string(begin) + ", " +
                                              std::to_string(end) + ") lies outside the " +
                                              std::to_string(payload.size()) + "-byte payload");
        }
        const std::size_t esize = element_size(*dtype);
        if (end - begin != rows * cols * esize) {
            io_fail(ErrorKind::integrity, "tensor '" + name + "' extent holds " + std::to_string(end - begin) +
                                              " bytes but shape needs " + std::to_string(rows * cols * esize));
        }
        extents.push_back({begin, end, name});

        std::vector<double> data(rows * cols);
        const std::uint8_t* p = payload.data() + begin;
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] = decode_element(p + i * esize, *dtype);
            if (!std::isfinite(data[i])) {
                io_fail(ErrorKind::data, "tensor '" + name + "' has a non-finite value at element " + std::to_string(i));
            }
        }
        store.insert(name, Tensor{Matrix(rows, cols, std::move(data)), *dtype});
    }

    std::sort(extents.begin(), extents.end(), [](const Extent& a, const Extent& b) { return a.begin < b.begin; });
    for (std::size_t i = 1; i < extents.size(); ++i) {
        if (extents[i].begin < extents[i - 1].end) {
            io_fail(ErrorKind::integrity, "tensors '" + extents[i - 1].name + "' and '" + extents[i].name + "' overlap");
        }
    }
    return store;
}

TensorStore load_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_fail(ErrorKind::io, "cannot open container " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) io_fail(ErrorKind::io, "failed reading container " + path.string());
    return parse_container(bytes);
}

std::vector<std::uint8_t> serialize_container(const TensorStore& store) {
    if (store.empty()) io_fail(ErrorKind::validation, "cannot write an empty tensor store");
    nlohmann::json header = nlohmann::json::object();
    std::vector<std::uint8_t> payload;
    for (const auto& [name, tensor] : store) {
        if (name.empty()) io_fail(ErrorKind::validation, "tensor name must be non-empty");
        const std::size_t begin = payload.size();
        for (double v : tensor.value.values()) encode_element(payload, v, tensor.source_dtype);
        header[name] = {
            {"dtype", std::string(to_string(tensor.source_dtype))},
            {"shape", {tensor.value.rows(), tensor.value.cols()}},
            {"data_offsets", {begin, payload.size()}},
        };
    }
    const std::string text = header.dump();
    std::vector<std::uint8_t> out;
    out.reserve(8 + text.size() + payload.size());
    append_le(out, std::uint64_t(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

void write_container(const TensorStore& store, const std::filesystem::path& path) {
    const auto bytes = serialize_container(store);
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail(ErrorKind::io, "cannot write container " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) io_fail(ErrorKind::io, "failed writing container " + path.string());
}

namespace {

void expect_shape(const TensorStore& store, const std::string& name, std::size_t rows, std::size_t cols,
                  TensorKind kind) {
    if (!store.contains(name)) {
        io_fail(ErrorKind::resolution,
                "tensor '" + name + "' required by template " + std::string(to_string(kind)) + " is missing");
    }
    const Matrix& m = store.matrix(name);
    if (m.rows() != rows || m.cols() != cols) {
        io_fail(ErrorKind::shape, "tensor '" + name + "' has shape [" + std::to_string(m.rows()) + ", " +
                                      std::to_string(m.cols()) + "], expected [" + std::to_string(rows) + ", " +
                                      std::to_string(cols) + "]");
    }
}

}  // namespace

void validate_store(const TensorStore& store, const ArchConfig& c) {
    c.validate();
    for (std::size_t l = 0; l < c.num_layers; ++l) {
        for (TensorKind kind : layer_tensor_kinds(c.has_gate)) {
            std::size_t rows = 0, cols = 0;
            switch (kind) {
                case TensorKind::q: rows = c.q_dim(); cols = c.d_model; break;
                case TensorKind::k:
                case TensorKind::v: rows = c.kv_dim(); cols = c.d_model; break;
                case TensorKind::o: rows = c.d_model; cols = c.q_dim(); break;
                case TensorKind::ffn_in:
                case TensorKind::ffn_gate: rows = c.d_ffn; cols = c.d_model; break;
                case TensorKind::ffn_out: rows = c.d_model; cols = c.d_ffn; break;
                default: break;
            }
            expect_shape(store, c.tensor_name(kind, l), rows, cols, kind);
        }
    }
    resolve_unembedding(store, c);
}

Matrix resolve_unembedding(const TensorStore& store, const ArchConfig& c) {
    auto lookup = [&](TensorKind kind) -> const Matrix* {
        if (!c.name_templates.contains(kind)) return nullptr;
        const std::string name = c.tensor_name(kind);
        return store.contains(name) ? &store.matrix(name) : nullptr;
    };
    const Matrix* stored = lookup(TensorKind::unembedding);
    if (stored == nullptr && c.tied_embeddings) stored = lookup(TensorKind::embedding);
    if (stored == nullptr) {
        io_fail(ErrorKind::resolution, c.tied_embeddings ? "neither unembedding nor embedding tensor found"
                                                         : "unembedding tensor '" +
                                                               c.tensor_name(TensorKind::unembedding) + "' not found");
    }
    if (stored->cols() != c.d_model || stored->rows() != c.vocab_size) {
        io_fail(ErrorKind::shape, "unembedding has shape [" + std::to_string(stored->rows()) + ", " +
                                      std::to_string(stored->cols()) + "], expected [vocab_size, d_model]");
    }
    return stored->transposed();
}

}  // namespace nsds
