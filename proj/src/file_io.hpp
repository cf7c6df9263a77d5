#pragma once

#include <string>
#include <string_view>

namespace relunlearn::detail {

// Writes `content` to `path`, creating parent directories. `what` names the
// file in error messages, e.g. "checkpoint".
void write_bytes(const std::string& path, std::string_view content, std::string_view what);

}  // namespace relunlearn::detail
