// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
// Sparse 3D feature maps: an exact coordinate -> row hash table paired with a
// dense (active sites x channels) feature matrix.
//
#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

namespace sp3d {

/// Integer voxel coordinate, ordered (height, width, length) to match the
/// grid shape. World Z indexes h, world Y indexes w, world X indexes l.
struct Coord3 {
    int32_t h = 0;
    int32_t w = 0;
    int32_t l = 0;

    int32_t operator[](int axis) const { return axis == 0 ? h : (axis == 1 ? w : l); }
    int32_t& operator[](int axis) { return axis == 0 ? h : (axis == 1 ? w : l); }

    friend auto operator<=>(const Coord3&, const Coord3&) = default;
};

struct Shape3 {
    int32_t h = 0;
    int32_t w = 0;
    int32_t l = 0;

    int32_t operator[](int axis) const { return axis == 0 ? h : (axis == 1 ? w : l); }
    int32_t& operator[](int axis) { return axis == 0 ? h : (axis == 1 ? w : l); }

    int64_t volume() const { return int64_t{h} * w * l; }
    bool positive() const { return h > 0 && w > 0 && l > 0; }
    bool contains(const Coord3& c) const {
        return c.h >= 0 && c.w >= 0 && c.l >= 0 && c.h < h && c.w < w && c.l < l;
    }

    friend auto operator<=>(const Shape3&, const Shape3&) = default;
};

struct Coord3Hash {
    size_t operator()(const Coord3& c) const noexcept {
        // FNV-1a over the three axes.
        uint64_t hash = 14695981039346656037ULL;
        for (int axis = 0; axis < 3; ++axis) {
            hash ^= static_cast<uint32_t>(c[axis]);
            hash *= 1099511628211ULL;
        }
        return static_cast<size_t>(hash ^ (hash >> 29));
    }
};

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Exact associative map from coordinates to row ids. Row ids are assigned in
/// insertion order and always form the range [0, size()).
class ActiveIndex {
  public:
    /// Inserts `c` if absent. Returns the row of `c` and whether it was new.
    std::pair<int32_t, bool> insert(const Coord3& c);

    /// Row of `c`, or -1 when inactive.
    int32_t row_of(const Coord3& c) const {
        auto it = rows_.find(c);
        return it == rows_.end() ? -1 : it->second;
    }
    bool contains(const Coord3& c) const { return rows_.count(c) != 0; }

    const Coord3& key(int32_t row) const { return keys_[static_cast<size_t>(row)]; }
    const std::vector<Coord3>& keys() const { return keys_; }
    int32_t size() const { return static_cast<int32_t>(keys_.size()); }
    bool empty() const { return keys_.empty(); }
    void reserve(size_t n);

    /// Same keys with the same row numbering.
    bool same_sites(const ActiveIndex& other) const { return keys_ == other.keys_; }

  private:
    std::vector<Coord3> keys_;
    std::unordered_map<Coord3, int32_t, Coord3Hash> rows_;
};

using IndexPtr = std::shared_ptr<const ActiveIndex>;

struct Site {
    Coord3 coord;
    std::vector<double> feature;
};

/// Immutable sparse feature map. The index may be shared between tensors
/// (submanifold layers reuse their input index verbatim).
class SparseTensor3 {
  public:
    /// Empty tensor (no active sites).
    SparseTensor3(Shape3 shape, int channels);

    /// Validates that rows match the index and every key lies in `shape`.
    SparseTensor3(Shape3 shape, IndexPtr index, FeatureMatrix features);

    /// Rejects duplicate or out-of-bounds coordinates and rows of the wrong
    /// length. Row i of the result is sites[i].
    static SparseTensor3 from_sites(Shape3 shape, int channels, std::span<const Site> sites);

    const Shape3& shape() const { return shape_; }
    int channels() const { return channels_; }
    int32_t active_count() const { return index_->size(); }
    bool empty() const { return index_->empty(); }

    const ActiveIndex& index() const { return *index_; }
    const IndexPtr& index_ptr() const { return index_; }
    const FeatureMatrix& features() const { return features_; }

    /// New tensor on the same shape and index with replaced features.
    SparseTensor3 with_features(FeatureMatrix features) const;

    /// True when both tensors have the same shape and identical active index.
    bool same_sites(const SparseTensor3& other) const;

  private:
    Shape3 shape_;
    int channels_;
    IndexPtr index_;
    FeatureMatrix features_;
};

/// Dense c x h x w x l array, channel-major then row-major over (h, w, l).
struct DenseGrid4 {
    int channels = 0;
    Shape3 shape;
    std::vector<double> data;

    DenseGrid4() = default;
    DenseGrid4(int channels, Shape3 shape)
        : channels(channels), shape(shape),
          data(static_cast<size_t>(channels) * static_cast<size_t>(shape.volume()), 0.0) {}

    size_t offset(int c, const Coord3& p) const {
        return ((static_cast<size_t>(c) * shape.h + p.h) * shape.w + p.w) * shape.l + p.l;
    }
    double& at(int c, const Coord3& p) { return data[offset(c, p)]; }
    double at(int c, const Coord3& p) const { return data[offset(c, p)]; }

    /// Squared magnitude of the feature vector at `p` is nonzero.
    bool site_nonzero(const Coord3& p) const;
};

/// Active sites carry their features; every other site is exactly zero.
DenseGrid4 to_dense(const SparseTensor3& t);

/// A site becomes active iff its feature vector has nonzero magnitude. Rows are
/// numbered in lexicographic (h, w, l) order.
SparseTensor3 dense_to_sparse(const DenseGrid4& grid);

/// Debug dump: one line "h w l f0 ... f(c-1)" per active site, sorted by
/// coordinate. Values are printed in shortest round-trip form.
void write_sites(std::ostream& os, const SparseTensor3& t);

} // namespace sp3d
