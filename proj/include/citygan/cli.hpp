#pragma once

#include <iosfwd>

namespace citygan {

/// Command-line entry point. Returns 0 on success, 1 on a usage error (usage
/// text on `err`) and 2 on a runtime failure (diagnostic on `err`).
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace citygan
