#include "mvr/tensor.hpp"

#include <sstream>

namespace mvr {

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace mvr
