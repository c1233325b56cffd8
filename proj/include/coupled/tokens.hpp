#pragma once

#include <cstddef>
#include <vector>

namespace coupled {

using Tokens = std::vector<std::size_t>;

/// Reserved vocabulary ids.
inline constexpr std::size_t kUnkId = 0;
inline constexpr std::size_t kPadId = 1;

}  // namespace coupled
