#include "fairlm/io.hpp"

#include <openssl/sha.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fairlm::io {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_u64(std::string& out, std::uint64_t v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) {
        if (pos + n > buf.size())
            throw ParseError("container: truncated file " + path);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void write_container(const std::string& path, const Container& c) {
    std::string out;
    put_str(out, c.magic);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(c.meta.size()));
    for (const auto& [k, v] : c.meta) {
        put_str(out, k);
        put_str(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(c.arrays.size()));
    for (const auto& [name, t] : c.arrays) {
        put_str(out, name);
        put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
        for (std::size_t d : t.shape()) put_u64(out, d);
        out.append(reinterpret_cast<const char*>(t.values().data()),
                   t.values().size() * sizeof(real));
    }
    atomic_write(path, out);
}

Container read_container(const std::string& path, const std::string& expected_magic) {
    const std::string bytes = read_file(path);
    Reader r{bytes, 0, path};
    Container c;
    c.magic = r.str();
    if (c.magic != expected_magic)
        throw ParseError("container " + path + ": magic '" + c.magic + "' != expected '" +
                         expected_magic + "'");
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw ParseError("container " + path + ": unsupported version " +
                         std::to_string(version));
    const std::uint32_t nmeta = r.u32();
    for (std::uint32_t i = 0; i < nmeta; ++i) {
        std::string k = r.str();
        c.meta[k] = r.str();
    }
    const std::uint32_t narr = r.u32();
    for (std::uint32_t i = 0; i < narr; ++i) {
        std::string name = r.str();
        const std::uint32_t ndim = r.u32();
        std::vector<std::size_t> shape;
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            shape.push_back(static_cast<std::size_t>(r.u64()));
            count *= shape.back();
        }
        r.need(count * sizeof(real));
        std::vector<real> vals(count);
        std::memcpy(vals.data(), bytes.data() + r.pos, count * sizeof(real));
        r.pos += count * sizeof(real);
        c.arrays.emplace_back(std::move(name), Tensor(std::move(shape), std::move(vals)));
    }
    return c;
}

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot open for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw InputError("short write: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw InputError("cannot rename " + tmp + " -> " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sha256_hex(const void* data, std::size_t len) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(static_cast<const unsigned char*>(data), len, digest);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char b : digest) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xf]);
    }
    return out;
}

std::string sha256_hex(const std::string& bytes) {
    return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace fairlm::io
