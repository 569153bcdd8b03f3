#pragma once

#include <string_view>

namespace nsds::log {

// Level comes from NSDS_LOG={error|warn|info|debug}; default warn. All
// output goes to stderr.
void init_from_env();

void debug(std::string_view msg);
void info(std::string_view msg);
void warn(std::string_view msg);

}  // namespace nsds::log
