#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ecgcl/data.hpp"
#include "ecgcl/models.hpp"
#include "ecgcl/tensor.hpp"

namespace ecgcl::io {

// All containers are little-endian on disk. The build targets LE hosts only;
// this is checked once at write/read time.
namespace detail {

inline void check_little_endian() {
    const uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1) throw Error("big-endian hosts are not supported by the binary containers");
}

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw Error("unexpected end of file");
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    const uint32_t n = read_pod<uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw Error("unexpected end of file");
    return s;
}

inline void write_doubles(std::ostream& out, const double* p, size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void read_doubles(std::istream& in, double* p, size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw Error("unexpected end of file");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// parameter checkpoints: magic, version, ordered (name, shape, f64 data)
// ---------------------------------------------------------------------------

constexpr char kCheckpointMagic[8] = {'E', 'C', 'G', 'C', 'L', 'C', 'P', '\0'};
constexpr uint32_t kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& out, const std::map<std::string, Tensor>& tensors) {
    detail::check_little_endian();
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::write_pod<uint32_t>(out, kCheckpointVersion);
    detail::write_pod<uint64_t>(out, tensors.size());
    for (const auto& [name, t] : tensors) {
        detail::write_string(out, name);
        detail::write_pod<uint32_t>(out, static_cast<uint32_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) detail::write_pod<int64_t>(out, t.dim(i));
        detail::write_doubles(out, t.data(), t.size());
    }
    if (!out) throw Error("checkpoint write failed");
}

inline std::map<std::string, Tensor> read_checkpoint(std::istream& in) {
    detail::check_little_endian();
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw Error("not a checkpoint file (bad magic)");
    const uint32_t version = detail::read_pod<uint32_t>(in);
    if (version != kCheckpointVersion)
        throw Error("unsupported checkpoint version " + std::to_string(version));
    const uint64_t count = detail::read_pod<uint64_t>(in);
    std::map<std::string, Tensor> out;
    for (uint64_t e = 0; e < count; ++e) {
        const std::string name = detail::read_string(in);
        const uint32_t ndim = detail::read_pod<uint32_t>(in);
        Shape shape(ndim);
        for (uint32_t i = 0; i < ndim; ++i)
            shape[i] = static_cast<int>(detail::read_pod<int64_t>(in));
        Tensor t(shape);
        detail::read_doubles(in, t.data(), t.size());
        out[name] = std::move(t);
    }
    return out;
}

inline void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_checkpoint(out, tensors);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint '" + path + "'");
    return read_checkpoint(in);
}

// Checkpoint payload of a model: parameters plus batchnorm buffers, with a
// reserved prefix separating the buffer entries.
inline std::map<std::string, Tensor> checkpoint_tensors(const ParamStore& params,
                                                        const ParamStore& buffers) {
    std::map<std::string, Tensor> all;
    for (const auto& [name, t] : params) all[name] = t;
    for (const auto& [name, t] : buffers) all["buffer." + name] = t;
    return all;
}

inline void split_checkpoint_tensors(const std::map<std::string, Tensor>& all, ParamStore& params,
                                     ParamStore& buffers) {
    params.clear();
    buffers.clear();
    const std::string prefix = "buffer.";
    for (const auto& [name, t] : all) {
        if (name.rfind(prefix, 0) == 0)
            buffers[name.substr(prefix.size())] = t;
        else
            params[name] = t;
    }
}

// ---------------------------------------------------------------------------
// record sets: the internal serialization of ingested / synthetic datasets
// ---------------------------------------------------------------------------

constexpr char kRecordSetMagic[8] = {'E', 'C', 'G', 'C', 'L', 'D', 'S', '\0'};
constexpr uint32_t kRecordSetVersion = 1;

inline void write_record_set(std::ostream& out, const std::vector<EcgRecord>& records) {
    detail::check_little_endian();
    out.write(kRecordSetMagic, sizeof kRecordSetMagic);
    detail::write_pod<uint32_t>(out, kRecordSetVersion);
    detail::write_pod<uint64_t>(out, records.size());
    for (const EcgRecord& r : records) {
        detail::write_string(out, r.record_id);
        detail::write_pod<double>(out, r.sampling_rate);
        detail::write_pod<int32_t>(out, r.leads());
        detail::write_pod<int32_t>(out, r.length());
        detail::write_pod<int32_t>(out, r.fold);
        detail::write_pod<uint8_t>(out, r.labels ? 1 : 0);
        if (r.labels)
            for (uint8_t b : r.labels->bits) detail::write_pod<uint8_t>(out, b);
        detail::write_doubles(out, r.signal.data(), r.signal.size());
    }
    if (!out) throw Error("record set write failed");
}

inline std::vector<EcgRecord> read_record_set(std::istream& in) {
    detail::check_little_endian();
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kRecordSetMagic, sizeof magic) != 0)
        throw Error("not a record set file (bad magic)");
    const uint32_t version = detail::read_pod<uint32_t>(in);
    if (version != kRecordSetVersion)
        throw Error("unsupported record set version " + std::to_string(version));
    const uint64_t count = detail::read_pod<uint64_t>(in);
    std::vector<EcgRecord> records;
    records.reserve(count);
    for (uint64_t e = 0; e < count; ++e) {
        EcgRecord r;
        r.record_id = detail::read_string(in);
        r.sampling_rate = detail::read_pod<double>(in);
        const int32_t d = detail::read_pod<int32_t>(in);
        const int32_t len = detail::read_pod<int32_t>(in);
        r.fold = detail::read_pod<int32_t>(in);
        const uint8_t has_labels = detail::read_pod<uint8_t>(in);
        if (has_labels) {
            LabelVector lv;
            for (int i = 0; i < kNumSuperclasses; ++i)
                lv.bits[static_cast<size_t>(i)] = detail::read_pod<uint8_t>(in);
            r.labels = lv;
        }
        if (d < 1 || len < 2) throw Error("record set: invalid signal shape");
        r.signal = Tensor({d, len});
        detail::read_doubles(in, r.signal.data(), r.signal.size());
        records.push_back(std::move(r));
    }
    return records;
}

inline void save_record_set(const std::string& path, const std::vector<EcgRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_record_set(out, records);
}

inline std::vector<EcgRecord> load_record_set(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open record set '" + path + "'");
    return read_record_set(in);
}

}  // namespace ecgcl::io
