#ifndef SQZ_VERSION_HPP
#define SQZ_VERSION_HPP

namespace sqz {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace sqz

#endif
