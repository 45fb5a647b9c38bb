#pragma once

// Dense row-major grid containers used throughout the library.
// Image<T>   : H x W scalar grid
// Mask       : H x W label grid (uint8, class ids)
// PlaneStack : C x H x W grid (probability maps, logits, features)
// Tensor4    : N x C x H x W batches (network internals)

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace taal {

template <typename T>
struct Image {
    int h = 0, w = 0;
    std::vector<T> v;

    Image() = default;
    Image(int h_, int w_, T fill = T(0)) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

    T& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    const T& at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    size_t size() const { return v.size(); }

    bool same_shape(const Image& o) const { return h == o.h && w == o.w; }
    friend bool operator==(const Image& a, const Image& b) {
        return a.h == b.h && a.w == b.w && a.v == b.v;
    }
};

struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> v;

    Mask() = default;
    Mask(int h_, int w_, uint8_t fill = 0) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

    uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    const uint8_t& at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    size_t size() const { return v.size(); }

    friend bool operator==(const Mask& a, const Mask& b) {
        return a.h == b.h && a.w == b.w && a.v == b.v;
    }
};

template <typename T>
struct PlaneStack {
    int c = 0, h = 0, w = 0;
    std::vector<T> v;

    PlaneStack() = default;
    PlaneStack(int c_, int h_, int w_, T fill = T(0))
        : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

    T& at(int j, int y, int x) { return v[(static_cast<size_t>(j) * h + y) * w + x]; }
    const T& at(int j, int y, int x) const { return v[(static_cast<size_t>(j) * h + y) * w + x]; }
    size_t plane() const { return static_cast<size_t>(h) * w; }
    size_t size() const { return v.size(); }

    bool same_shape(const PlaneStack& o) const { return c == o.c && h == o.h && w == o.w; }
    friend bool operator==(const PlaneStack& a, const PlaneStack& b) {
        return a.c == b.c && a.h == b.h && a.w == b.w && a.v == b.v;
    }
};

template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

    T& at(int i, int j, int y, int x) {
        return v[((static_cast<size_t>(i) * c + j) * h + y) * w + x];
    }
    const T& at(int i, int j, int y, int x) const {
        return v[((static_cast<size_t>(i) * c + j) * h + y) * w + x];
    }
    // contiguous C*H*W slab of sample i
    T* sample(int i) { return v.data() + static_cast<size_t>(i) * c * h * w; }
    const T* sample(int i) const { return v.data() + static_cast<size_t>(i) * c * h * w; }
    size_t sample_size() const { return static_cast<size_t>(c) * h * w; }
    size_t size() const { return v.size(); }
};

template <typename T>
PlaneStack<T> slice_sample(const Tensor4<T>& t, int i) {
    PlaneStack<T> p(t.c, t.h, t.w);
    const T* src = t.sample(i);
    std::copy(src, src + t.sample_size(), p.v.begin());
    return p;
}

template <typename T>
void put_sample(Tensor4<T>& t, int i, const PlaneStack<T>& p) {
    if (p.c != t.c || p.h != t.h || p.w != t.w) throw std::invalid_argument("put_sample: shape mismatch");
    std::copy(p.v.begin(), p.v.end(), t.sample(i));
}

template <typename From, typename To>
PlaneStack<To> cast_planes(const PlaneStack<From>& p) {
    PlaneStack<To> out(p.c, p.h, p.w);
    for (size_t i = 0; i < p.v.size(); ++i) out.v[i] = static_cast<To>(p.v[i]);
    return out;
}

template <typename From, typename To>
Image<To> cast_image(const Image<From>& im) {
    Image<To> out(im.h, im.w);
    for (size_t i = 0; i < im.v.size(); ++i) out.v[i] = static_cast<To>(im.v[i]);
    return out;
}

}  // namespace taal
