#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fairlm/tensor.hpp"

namespace fairlm::io {

// Versioned binary container: magic string, metadata key-value block, then
// named float64 arrays. Writing the same content twice yields identical bytes.
struct Container {
    std::string magic;
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> arrays;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path, const std::string& expected_magic);

// Writes to a temporary file in the same directory, then renames into place.
void atomic_write(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& bytes);

}  // namespace fairlm::io
