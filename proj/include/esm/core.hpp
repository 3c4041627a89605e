#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace esm {

/// Thrown for malformed user input (bad config, bad files, degenerate
/// geometry). The CLI maps it to exit code 1; everything else is 2.
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major H x W x C image of doubles. The workhorse container for
/// ego-sphere states, camera frames and observations.
class Image {
  public:
    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : h_(h), w_(w), c_(c), data_(static_cast<size_t>(h) * w * c, fill) {
        if (h < 0 || w < 0 || c < 0)
            throw input_error("Image: negative dimension");
    }

    int h() const { return h_; }
    int w() const { return w_; }
    int c() const { return c_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * w_ + j) * c_ + k];
    }
    double operator()(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * w_ + j) * c_ + k];
    }

    /// All channels of one pixel.
    std::span<double> px(int i, int j) {
        return {data_.data() + (static_cast<size_t>(i) * w_ + j) * c_, static_cast<size_t>(c_)};
    }
    std::span<const double> px(int i, int j) const {
        return {data_.data() + (static_cast<size_t>(i) * w_ + j) * c_, static_cast<size_t>(c_)};
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Image& o) const { return h_ == o.h_ && w_ == o.w_ && c_ == o.c_; }

  private:
    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<double> data_;
};

}  // namespace esm
