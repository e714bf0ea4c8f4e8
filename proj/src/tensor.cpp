#include "rflight/tensor.hpp"

#include <cmath>
#include <sstream>

namespace rflight {

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < rank_; ++i) {
        if (i) os << "x";
        os << dims_[static_cast<std::size_t>(i)];
    }
    os << ")";
    return os.str();
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

} // namespace rflight
