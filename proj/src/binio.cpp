#include "galdet/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <ostream>

#include "galdet/types.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary container code assumes a little-endian host");

namespace galdet {

void BinWriter::magic(const char tag[9], uint32_t version) {
    bytes(tag, 8);
    u32(version);
}

void BinWriter::u8(uint8_t v) { bytes(&v, 1); }

void BinWriter::u32(uint32_t v) { bytes(&v, 4); }

void BinWriter::u64(uint64_t v) { bytes(&v, 8); }

void BinWriter::f32(float v) { bytes(&v, 4); }

void BinWriter::f64(double v) { bytes(&v, 8); }

void BinWriter::str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
}

void BinWriter::bytes(const void* data, size_t size) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out_) {
        throw Error("binio: write failed");
    }
}

void BinWriter::f32_block(const float* data, size_t count) {
    u64(count);
    bytes(data, count * sizeof(float));
}

uint32_t BinReader::magic(const char tag[9], uint32_t max_version) {
    char got[8];
    fill(got, 8);
    if (std::memcmp(got, tag, 8) != 0) {
        throw Error(source_ + ": not a " + std::string(tag, 8) +
                    " file (bad magic)");
    }
    const uint32_t version = u32();
    if (version == 0 || version > max_version) {
        throw Error(source_ + ": unsupported format version " +
                    std::to_string(version));
    }
    return version;
}

uint8_t BinReader::u8() {
    uint8_t v;
    fill(&v, 1);
    return v;
}

uint32_t BinReader::u32() {
    uint32_t v;
    fill(&v, 4);
    return v;
}

uint64_t BinReader::u64() {
    uint64_t v;
    fill(&v, 8);
    return v;
}

float BinReader::f32() {
    float v;
    fill(&v, 4);
    return v;
}

double BinReader::f64() {
    double v;
    fill(&v, 8);
    return v;
}

std::string BinReader::str(size_t max_len) {
    const uint64_t len = u64();
    if (len > max_len) {
        throw Error(source_ + ": corrupt string length " + std::to_string(len));
    }
    std::string s(len, '\0');
    fill(s.data(), len);
    return s;
}

void BinReader::bytes(void* data, size_t size) { fill(data, size); }

void BinReader::f32_block(float* data, size_t count) {
    const uint64_t stored = u64();
    if (stored != count) {
        throw Error(source_ + ": block size mismatch, expected " +
                    std::to_string(count) + " got " + std::to_string(stored));
    }
    fill(data, count * sizeof(float));
}

void BinReader::fill(void* data, size_t size) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (static_cast<size_t>(in_.gcount()) != size) {
        throw Error(source_ + ": truncated or corrupt file");
    }
}

void atomic_write_file(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open for writing: " + tmp.string());
        }
        writer(out);
        out.flush();
        if (!out) {
            throw Error("write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

}  // namespace galdet
