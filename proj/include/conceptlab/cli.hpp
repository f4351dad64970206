#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace conceptlab::cli {

// Runs one subcommand. `args` excludes the program name. Returns 0 on
// success, 2 on a usage error and 1 on a runtime error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args);

// 64-bit FNV-1a, used for provenance hashes.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace conceptlab::cli
