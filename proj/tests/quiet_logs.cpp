#include <spdlog/spdlog.h>

// Training logs every epoch; keep test output readable.
namespace {
const bool quiet = [] {
    spdlog::set_level(spdlog::level::err);
    return true;
}();
}  // namespace
