#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace galdet {

// Little-endian binary container helpers shared by the gallery, cache
// and checkpoint file formats. Each file starts with an 8-byte magic tag
// followed by a u32 format version.

class BinWriter {
public:
    explicit BinWriter(std::ostream& out) : out_(out) {}

    void magic(const char tag[9], uint32_t version);
    void u8(uint8_t v);
    void u32(uint32_t v);
    void u64(uint64_t v);
    void f32(float v);
    void f64(double v);
    void str(const std::string& s);
    void bytes(const void* data, size_t size);
    void f32_block(const float* data, size_t count);

private:
    std::ostream& out_;
};

class BinReader {
public:
    BinReader(std::istream& in, std::string source_name)
        : in_(in), source_(std::move(source_name)) {}

    /// Checks magic and returns the stored format version; errors if the
    /// version exceeds max_version.
    uint32_t magic(const char tag[9], uint32_t max_version);
    uint8_t u8();
    uint32_t u32();
    uint64_t u64();
    float f32();
    double f64();
    std::string str(size_t max_len = 1 << 20);
    void bytes(void* data, size_t size);
    void f32_block(float* data, size_t count);

private:
    void fill(void* data, size_t size);

    std::istream& in_;
    std::string source_;
};

/// Writes via a sibling temp file then renames into place, so readers
/// never observe a half-written file.
void atomic_write_file(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);

}  // namespace galdet
