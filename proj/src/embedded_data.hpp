#pragma once

#include <optional>
#include <string_view>

namespace oscope::detail {

/// Contents of a file under data/ compiled into the library (e.g. "vocab/comco.tsv").
std::optional<std::string_view> embedded_file(std::string_view relative_path);

}  // namespace oscope::detail
