#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecgcl {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) {
        if (d < 0) throw Error("negative dimension in shape");
        n *= static_cast<size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

// Dense row-major n-d array of doubles. Value semantics throughout; at desk
// scale copies are cheap and keep the differentiation tape simple.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

    static Tensor from(Shape shape, std::vector<double> values) {
        Tensor t;
        if (shape_numel(shape) != values.size())
            throw Error("tensor init: " + std::to_string(values.size()) +
                        " values for shape " + shape_str(shape));
        t.shape_ = std::move(shape);
        t.data_ = std::move(values);
        return t;
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at(int i, int j) { return data_[static_cast<size_t>(i) * dim(1) + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * dim(1) + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != size())
            throw Error("reshape " + shape_str(shape_) + " -> " + shape_str(s));
        Tensor t = *this;
        t.shape_ = std::move(s);
        return t;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

private:
    Shape shape_;
    std::vector<double> data_;
};

inline bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && a.values() == b.values();
}

}  // namespace ecgcl
