#pragma once

namespace iclkit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace iclkit
