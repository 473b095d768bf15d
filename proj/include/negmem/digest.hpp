#ifndef NEGMEM_DIGEST_HPP_
#define NEGMEM_DIGEST_HPP_

#include <filesystem>
#include <string>
#include <string_view>

namespace negmem {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string file_sha256_hex(const std::filesystem::path& path);

}  // namespace negmem

#endif  // NEGMEM_DIGEST_HPP_
