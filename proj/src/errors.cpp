#include "blockmerge/errors.hpp"

namespace blockmerge {

Error::Error(const std::string& kind, const std::string& message, bool user_error)
    : std::runtime_error(kind + ": " + message), kind_(kind), user_error_(user_error) {}

}  // namespace blockmerge
