#include "mixgen/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mixgen/error.hpp"
#include "mixgen/jsonio.hpp"

namespace mixgen {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <class U>
void put(std::string& out, U value) {
    char buf[sizeof(U)];
    std::memcpy(buf, &value, sizeof(U));
    out.append(buf, sizeof(U));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <class U>
    U get() {
        need(sizeof(U));
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw Error(ErrorKind::CorruptFile, "checkpoint ends unexpectedly");
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
    std::size_t left = bytes.size();
    while (left > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
        crc = crc32(crc, p, chunk);
        p += chunk;
        left -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void diff_into(const nlohmann::json& a, const nlohmann::json& b, const std::string& prefix,
               std::vector<std::string>& out) {
    if (a.is_object() && b.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
            if (!b.contains(it.key())) {
                out.push_back(key + ": missing in other");
            } else {
                diff_into(it.value(), b.at(it.key()), key, out);
            }
        }
        for (auto it = b.begin(); it != b.end(); ++it) {
            if (!a.contains(it.key())) out.push_back((prefix.empty() ? "" : prefix + ".") + it.key() + ": missing");
        }
    } else if (a != b) {
        out.push_back(prefix + ": " + a.dump() + " vs " + b.dump());
    }
}

}  // namespace

const NamedArray* CheckpointData::find(const std::string& name) const {
    for (const auto& a : arrays) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
    std::string out = "UGX1";
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string cfg = data.config.dump();
    put<std::uint64_t>(out, cfg.size());
    out += cfg;
    for (const auto& a : data.arrays) {
        if (numel(a.shape) != static_cast<std::int64_t>(a.values.size())) {
            throw Error(ErrorKind::ShapeMismatch, "array " + a.name + " does not match its shape");
        }
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
        out += a.name;
        put<std::uint8_t>(out, static_cast<std::uint8_t>(a.dtype));
        put<std::uint8_t>(out, static_cast<std::uint8_t>(a.shape.size()));
        for (auto d : a.shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        for (double v : a.values) {
            if (a.dtype == DType::F32) {
                put<float>(out, static_cast<float>(v));
            } else {
                put<double>(out, v);
            }
        }
    }
    put<std::uint32_t>(out, crc32_of(out));
    write_file_atomic(path, out);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4 + 4 + 8 + 4 || bytes.compare(0, 4, "UGX1") != 0) {
        throw Error(ErrorKind::CorruptFile, path.string() + " is not a checkpoint");
    }
    const std::string_view body(bytes.data(), bytes.size() - 4);
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    if (crc32_of(body) != stored) throw Error(ErrorKind::CorruptFile, "checksum mismatch in " + path.string());

    Reader r(body);
    r.take(4);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                    ", expected " + std::to_string(kCheckpointVersion));
    }
    CheckpointData data;
    const auto cfg_len = r.get<std::uint64_t>();
    try {
        data.config = nlohmann::json::parse(r.take(cfg_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptFile, std::string("checkpoint config: ") + e.what());
    }
    while (!r.done()) {
        NamedArray a;
        a.name = std::string(r.take(r.get<std::uint32_t>()));
        const auto dtype = r.get<std::uint8_t>();
        if (dtype > 1) throw Error(ErrorKind::CorruptFile, "unknown dtype code in " + a.name);
        a.dtype = static_cast<DType>(dtype);
        const auto rank = r.get<std::uint8_t>();
        for (int i = 0; i < rank; ++i) a.shape.push_back(static_cast<std::int64_t>(r.get<std::uint64_t>()));
        const auto n = numel(a.shape);
        a.values.resize(static_cast<std::size_t>(n));
        for (auto& v : a.values) v = a.dtype == DType::F32 ? double(r.get<float>()) : r.get<double>();
        data.arrays.push_back(std::move(a));
    }
    return data;
}

std::vector<std::string> config_differences(const nlohmann::json& a, const nlohmann::json& b) {
    std::vector<std::string> out;
    diff_into(a, b, "", out);
    return out;
}

}  // namespace mixgen
