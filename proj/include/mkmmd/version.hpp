#pragma once

namespace mkmmd {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mkmmd
