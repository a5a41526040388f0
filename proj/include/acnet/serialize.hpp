#ifndef ACNET_SERIALIZE_HPP
#define ACNET_SERIALIZE_HPP

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>

#include "acnet/data.hpp"
#include "acnet/model.hpp"

namespace acnet {

namespace detail {

struct Fnv1a64 {
    std::uint64_t h = 1469598103934665603ull;
    void update(const void* data, size_t len) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    }
};

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_value(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_value(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

/// Sequential little-endian reader with truncation checks.
class ByteReader {
public:
    ByteReader(const std::string& blob, size_t offset) : blob_(blob), pos_(offset) {}

    size_t pos() const { return pos_; }

    std::uint32_t get_u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }
    std::uint64_t get_u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
        return v;
    }
    std::uint8_t get_u8() {
        need(1);
        return byte();
    }

    template <typename T>
    T get_value() {
        if constexpr (std::is_same_v<T, float>)
            return std::bit_cast<float>(get_u32());
        else
            return std::bit_cast<double>(get_u64());
    }

    bool exhausted() const { return pos_ >= blob_.size(); }

private:
    const std::string& blob_;
    size_t pos_;

    void need(size_t k) const {
        if (pos_ + k > blob_.size()) fail_runtime("serialize: truncated binary section");
    }
    std::uint8_t byte() { return static_cast<std::uint8_t>(blob_[pos_++]); }
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_runtime("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& blob) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_runtime("cannot write " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) fail_runtime("write failed for " + path);
}

/// Pops header lines until the "binary" marker; offset ends at the first
/// binary byte.
class HeaderReader {
public:
    explicit HeaderReader(const std::string& blob) : blob_(blob) {}

    std::string next_line() {
        size_t end = blob_.find('\n', pos_);
        if (end == std::string::npos) fail_runtime("serialize: header truncated");
        std::string line = blob_.substr(pos_, end - pos_);
        pos_ = end + 1;
        return line;
    }

    size_t pos() const { return pos_; }

private:
    const std::string& blob_;
    size_t pos_ = 0;
};

}  // namespace detail

inline constexpr const char* kModelMagic = "acnet-model v1";
inline constexpr const char* kDataMagic = "acnet-data v1";

/// Model file layout: a text header (format version, precision, trained or
/// fused form, ablation flags, the structural spec with per-conv block
/// flags) followed by a binary section of length-prefixed little-endian
/// value arrays in declared layer order and a trailing FNV-1a checksum.
template <typename T>
void save_model(Model<T>& model, const std::string& path) {
    std::string out;
    out += kModelMagic;
    out += "\nprecision ";
    out += precision_name(precision_of<T>());
    out += "\nform ";
    out += model.fused ? "fused" : "trained";
    out += "\nablation horizontal=";
    out += model.ablation.use_horizontal ? "1" : "0";
    out += " vertical=";
    out += model.ablation.use_vertical ? "1" : "0";
    out += " bn_in_branch=";
    out += model.ablation.bn_in_branch ? "1" : "0";
    out += "\nspec\n";
    out += format_model_spec(model.spec);
    out += "endspec\nbinary\n";

    std::string bin;
    for_each_array(model, [&](const char*, std::vector<T>& arr) {
        detail::put_u32(bin, static_cast<std::uint32_t>(arr.size()));
        for (T v : arr) detail::put_value(bin, v);
    });
    detail::Fnv1a64 sum;
    sum.update(bin.data(), bin.size());
    detail::put_u64(bin, sum.h);
    out += bin;
    detail::write_file(path, out);
}

struct LoadedModel {
    Precision precision = Precision::f32;
    std::variant<std::monostate, Model<float>, Model<double>> model;

    Model<float>& f32() { return std::get<Model<float>>(model); }
    Model<double>& f64() { return std::get<Model<double>>(model); }
};

namespace detail {

template <typename T>
Model<T> load_model_body(const std::string& blob, size_t bin_off, const ModelSpec& spec,
                         const Ablation& ab, bool fused) {
    Model<T> model = expand_to_acnet<T>(spec, ab);
    model.fused = fused;
    if (blob.size() < bin_off + 8) fail_runtime("serialize: truncated binary section");

    ByteReader r(blob, bin_off);
    for_each_array(model, [&](const char* name, std::vector<T>& arr) {
        const std::uint32_t count = r.get_u32();
        if (count != arr.size())
            fail_runtime(std::string("serialize: array '") + name + "' expected " +
                         std::to_string(arr.size()) + " values, file has " + std::to_string(count));
        for (auto& v : arr) v = r.template get_value<T>();
    });
    if (r.pos() != blob.size() - 8) fail_runtime("serialize: binary section size mismatch");

    // checksum covers every binary byte before the trailing digest
    Fnv1a64 sum;
    sum.update(blob.data() + bin_off, blob.size() - bin_off - 8);
    ByteReader tail(blob, blob.size() - 8);
    if (tail.get_u64() != sum.h) fail_runtime("serialize: checksum mismatch");
    return model;
}

}  // namespace detail

inline LoadedModel load_model_any(const std::string& path) {
    const std::string blob = detail::read_file(path);
    detail::HeaderReader hr(blob);
    if (hr.next_line() != kModelMagic) fail_runtime("serialize: unsupported model file version");
    std::string line = hr.next_line();
    Precision prec;
    if (line == "precision f32")
        prec = Precision::f32;
    else if (line == "precision f64")
        prec = Precision::f64;
    else
        fail_runtime("serialize: bad precision line '" + line + "'");
    line = hr.next_line();
    bool fused;
    if (line == "form trained")
        fused = false;
    else if (line == "form fused")
        fused = true;
    else
        fail_runtime("serialize: bad form line '" + line + "'");
    line = hr.next_line();
    Ablation ab;
    {
        std::istringstream ss(line);
        std::string tag, tok;
        ss >> tag;
        if (tag != "ablation") fail_runtime("serialize: bad ablation line");
        while (ss >> tok) {
            if (tok == "horizontal=0") ab.use_horizontal = false;
            else if (tok == "vertical=0") ab.use_vertical = false;
            else if (tok == "bn_in_branch=0") ab.bn_in_branch = false;
        }
    }
    if (hr.next_line() != "spec") fail_runtime("serialize: missing spec section");
    std::string spec_text;
    while ((line = hr.next_line()) != "endspec") spec_text += line + "\n";
    if (hr.next_line() != "binary") fail_runtime("serialize: missing binary marker");
    const ModelSpec spec = parse_model_spec(spec_text);

    LoadedModel out;
    out.precision = prec;
    if (prec == Precision::f32)
        out.model = detail::load_model_body<float>(blob, hr.pos(), spec, ab, fused);
    else
        out.model = detail::load_model_body<double>(blob, hr.pos(), spec, ab, fused);
    return out;
}

template <typename T>
Model<T> load_model(const std::string& path) {
    LoadedModel any = load_model_any(path);
    if (any.precision != precision_of<T>())
        fail_runtime("load_model: file precision is " + std::string(precision_name(any.precision)));
    return std::move(std::get<Model<T>>(any.model));
}

/// Dataset file: text header then label bytes and f32 pixels, both
/// length-prefixed, with the same trailing checksum scheme.
template <typename T>
void save_dataset(const Dataset<T>& d, const std::string& path) {
    if (d.class_count > 255) fail_invalid("save_dataset: label bytes cap classes at 255");
    std::string out;
    out += kDataMagic;
    out += "\nsamples " + std::to_string(d.images.n);
    out += "\nclasses " + std::to_string(d.class_count);
    out += "\ndims " + std::to_string(d.images.c) + " " + std::to_string(d.images.h) + " " +
           std::to_string(d.images.w);
    out += "\nbinary\n";
    std::string bin;
    detail::put_u32(bin, static_cast<std::uint32_t>(d.labels.size()));
    for (int l : d.labels) bin.push_back(static_cast<char>(l));
    detail::put_u32(bin, static_cast<std::uint32_t>(d.images.data.size()));
    for (T v : d.images.data) detail::put_value(bin, static_cast<float>(v));
    detail::Fnv1a64 sum;
    sum.update(bin.data(), bin.size());
    detail::put_u64(bin, sum.h);
    out += bin;
    detail::write_file(path, out);
}

template <typename T>
Dataset<T> load_dataset(const std::string& path) {
    const std::string blob = detail::read_file(path);
    detail::HeaderReader hr(blob);
    if (hr.next_line() != kDataMagic) fail_runtime("serialize: unsupported dataset file version");
    int samples = 0, classes = 0, c = 0, h = 0, w = 0;
    {
        std::istringstream s1(hr.next_line()), s2(hr.next_line()), s3(hr.next_line());
        std::string tag;
        if (!(s1 >> tag >> samples) || tag != "samples") fail_runtime("serialize: bad samples line");
        if (!(s2 >> tag >> classes) || tag != "classes") fail_runtime("serialize: bad classes line");
        if (!(s3 >> tag >> c >> h >> w) || tag != "dims") fail_runtime("serialize: bad dims line");
    }
    if (hr.next_line() != "binary") fail_runtime("serialize: missing binary marker");
    const size_t bin_off = hr.pos();
    if (blob.size() < bin_off + 8) fail_runtime("serialize: truncated binary section");

    detail::ByteReader r(blob, bin_off);
    Dataset<T> d;
    d.class_count = classes;
    const std::uint32_t nl = r.get_u32();
    if (nl != static_cast<std::uint32_t>(samples)) fail_runtime("serialize: label count mismatch");
    d.labels.resize(nl);
    for (auto& l : d.labels) l = r.get_u8();
    const std::uint32_t np = r.get_u32();
    if (np != static_cast<std::uint64_t>(samples) * c * h * w)
        fail_runtime("serialize: pixel count mismatch");
    d.images = Tensor<T>(samples, c, h, w);
    for (auto& v : d.images.data) v = static_cast<T>(r.template get_value<float>());
    if (r.pos() != blob.size() - 8) fail_runtime("serialize: binary section size mismatch");

    detail::Fnv1a64 sum;
    sum.update(blob.data() + bin_off, blob.size() - bin_off - 8);
    detail::ByteReader tail(blob, blob.size() - 8);
    if (tail.get_u64() != sum.h) fail_runtime("serialize: checksum mismatch");
    d.validate();
    return d;
}

}  // namespace acnet

#endif
