#include "caselink/log.hpp"

#include <atomic>
#include <iostream>

namespace caselink::log {

namespace {
std::atomic<bool> g_quiet{false};
}

void set_quiet(bool quiet) { g_quiet = quiet; }

void warn(std::string_view message) {
    if (!g_quiet) std::cerr << "warning: " << message << '\n';
}

void info(std::string_view message) {
    if (!g_quiet) std::cerr << message << '\n';
}

}  // namespace caselink::log
