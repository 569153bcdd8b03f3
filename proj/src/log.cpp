#include "nsds/log.hpp"

#include <cstdlib>
#include <memory>
#include <mutex>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace nsds::log {
namespace {

spdlog::logger& logger() {
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto l = std::make_shared<spdlog::logger>("nsds", std::make_shared<spdlog::sinks::stderr_sink_mt>());
        l->set_pattern("[%l] %v");
        l->set_level(spdlog::level::warn);
        return l;
    }();
    return *instance;
}

}  // namespace

void init_from_env() {
    const char* env = std::getenv("NSDS_LOG");
    if (env == nullptr) return;
    const std::string_view level(env);
    if (level == "error") logger().set_level(spdlog::level::err);
    else if (level == "warn") logger().set_level(spdlog::level::warn);
    else if (level == "info") logger().set_level(spdlog::level::info);
    else if (level == "debug") logger().set_level(spdlog::level::debug);
}

void debug(std::string_view msg) { logger().debug(msg); }
void info(std::string_view msg) { logger().info(msg); }
void warn(std::string_view msg) { logger().warn(msg); }

}  // namespace nsds::log
