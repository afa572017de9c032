#pragma once

#ifndef CONTACT_FLOW_VERSION
#define CONTACT_FLOW_VERSION "0.1.0"
#endif

namespace contact_flow {

inline constexpr const char* version = CONTACT_FLOW_VERSION;

}  // namespace contact_flow
