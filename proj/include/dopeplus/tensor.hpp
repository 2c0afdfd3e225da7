#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace dopeplus {

/// Dense row-major array of fixed rank.
///
/// The `Tag` parameter only distinguishes otherwise identical tables at
/// compile time, so a policy cannot be passed where a payoff is expected.
/// The last index is contiguous; `row()` exposes it as a span.
template <std::size_t Rank, class Tag, class T = double>
class Tensor {
    static_assert(Rank > 0, "rank-0 tensors are not supported");

public:
    using value_type = T;
    using extents_type = std::array<std::size_t, Rank>;

    Tensor() = default;

    explicit Tensor(const extents_type& extents, T fill = T{})
        : extents_(extents), data_(element_count(extents), fill) {}

    const extents_type& extents() const noexcept { return extents_; }
    std::size_t extent(std::size_t dim) const noexcept { return extents_[dim]; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    template <class... I>
        requires(sizeof...(I) == Rank)
    T& operator()(I... idx) noexcept {
        return data_[offset(static_cast<std::size_t>(idx)...)];
    }

    template <class... I>
        requires(sizeof...(I) == Rank)
    const T& operator()(I... idx) const noexcept {
        return data_[offset(static_cast<std::size_t>(idx)...)];
    }

    template <class... I>
        requires(sizeof...(I) == Rank - 1)
    std::span<T> row(I... idx) noexcept {
        return {data_.data() + offset(static_cast<std::size_t>(idx)..., std::size_t{0}),
                extents_[Rank - 1]};
    }

    template <class... I>
        requires(sizeof...(I) == Rank - 1)
    std::span<const T> row(I... idx) const noexcept {
        return {data_.data() + offset(static_cast<std::size_t>(idx)..., std::size_t{0}),
                extents_[Rank - 1]};
    }

    std::span<T> flat() noexcept { return data_; }
    std::span<const T> flat() const noexcept { return data_; }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Elementwise map into a tensor of the same shape (the tag may change).
    template <class OutTag = Tag, class F>
    Tensor<Rank, OutTag, T> map(F&& f) const {
        Tensor<Rank, OutTag, T> out(extents_);
        auto dst = out.flat();
        for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = f(data_[i]);
        return out;
    }

    bool operator==(const Tensor&) const = default;

private:
    template <class... I>
    std::size_t offset(I... idx) const noexcept {
        const std::array<std::size_t, Rank> ix{idx...};
        std::size_t off = 0;
        for (std::size_t d = 0; d < Rank; ++d) off = off * extents_[d] + ix[d];
        return off;
    }

    static std::size_t element_count(const extents_type& e) {
        return std::accumulate(e.begin(), e.end(), std::size_t{1}, std::multiplies<>{});
    }

    extents_type extents_{};
    std::vector<T> data_;
};

/// Sum of elementwise products of two equally shaped tables.
template <std::size_t Rank, class TagA, class TagB>
double inner_product(const Tensor<Rank, TagA>& a, const Tensor<Rank, TagB>& b) {
    auto x = a.flat();
    auto y = b.flat();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

}  // namespace dopeplus
