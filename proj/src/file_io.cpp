#include "file_io.hpp"

#include <filesystem>
#include <fstream>

#include "relunlearn/error.hpp"

namespace relunlearn::detail {

void write_bytes(const std::string& path, std::string_view content, std::string_view what) {
    namespace fs = std::filesystem;
    const fs::path p(path);
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create directory '" + p.parent_path().string() + "': " + ec.message());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + std::string(what) + " '" + path + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::kIo, "failed writing " + std::string(what) + " '" + path + "'");
}

}  // namespace relunlearn::detail
