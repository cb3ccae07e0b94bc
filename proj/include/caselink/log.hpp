#pragma once

#include <string_view>

namespace caselink::log {

void set_quiet(bool quiet);
void warn(std::string_view message);
void info(std::string_view message);

}  // namespace caselink::log
