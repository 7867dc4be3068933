// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/sparse_tensor.hpp"

#include "sp3d/error.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <numeric>
#include <ostream>

namespace sp3d {

namespace {

std::string coord_str(const Coord3& c) { return fmt::format("({}, {}, {})", c.h, c.w, c.l); }

} // namespace

std::pair<int32_t, bool> ActiveIndex::insert(const Coord3& c) {
    auto [it, inserted] = rows_.try_emplace(c, static_cast<int32_t>(keys_.size()));
    if (inserted) {
        keys_.push_back(c);
    }
    return {it->second, inserted};
}

void ActiveIndex::reserve(size_t n) {
    keys_.reserve(n);
    rows_.reserve(n);
}

SparseTensor3::SparseTensor3(Shape3 shape, int channels)
    : shape_(shape), channels_(channels), index_(std::make_shared<ActiveIndex>()),
      features_(0, channels) {
    if (!shape.positive() || channels <= 0) {
        throw Error("SparseTensor3: shape and channels must be positive");
    }
}

SparseTensor3::SparseTensor3(Shape3 shape, IndexPtr index, FeatureMatrix features)
    : shape_(shape), channels_(static_cast<int>(features.cols())), index_(std::move(index)),
      features_(std::move(features)) {
    if (!shape.positive() || channels_ <= 0) {
        throw Error("SparseTensor3: shape and channels must be positive");
    }
    if (!index_) {
        throw Error("SparseTensor3: null index");
    }
    if (features_.rows() != index_->size()) {
        throw Error(fmt::format("SparseTensor3: {} feature rows for {} active sites",
                                features_.rows(), index_->size()));
    }
    for (const auto& key : index_->keys()) {
        if (!shape_.contains(key)) {
            throw Error(fmt::format("SparseTensor3: coordinate {} outside shape ({}, {}, {})",
                                    coord_str(key), shape.h, shape.w, shape.l));
        }
    }
}

SparseTensor3 SparseTensor3::from_sites(Shape3 shape, int channels, std::span<const Site> sites) {
    if (!shape.positive() || channels <= 0) {
        throw Error("from_sites: shape and channels must be positive");
    }
    auto index = std::make_shared<ActiveIndex>();
    index->reserve(sites.size());
    FeatureMatrix features(static_cast<Eigen::Index>(sites.size()), channels);
    for (size_t i = 0; i < sites.size(); ++i) {
        const Site& site = sites[i];
        if (!shape.contains(site.coord)) {
            throw Error(fmt::format("from_sites: coordinate {} out of bounds", coord_str(site.coord)));
        }
        if (static_cast<int>(site.feature.size()) != channels) {
            throw Error(fmt::format("from_sites: site {} has {} features, expected {}",
                                    coord_str(site.coord), site.feature.size(), channels));
        }
        if (!index->insert(site.coord).second) {
            throw Error(fmt::format("from_sites: duplicate coordinate {}", coord_str(site.coord)));
        }
        for (int c = 0; c < channels; ++c) {
            features(static_cast<Eigen::Index>(i), c) = site.feature[static_cast<size_t>(c)];
        }
    }
    return SparseTensor3(shape, std::move(index), std::move(features));
}

SparseTensor3 SparseTensor3::with_features(FeatureMatrix features) const {
    return SparseTensor3(shape_, index_, std::move(features));
}

bool SparseTensor3::same_sites(const SparseTensor3& other) const {
    if (shape_ != other.shape_) {
        return false;
    }
    return index_ == other.index_ || index_->same_sites(*other.index_);
}

bool DenseGrid4::site_nonzero(const Coord3& p) const {
    for (int c = 0; c < channels; ++c) {
        if (at(c, p) != 0.0) {
            return true;
        }
    }
    return false;
}

DenseGrid4 to_dense(const SparseTensor3& t) {
    DenseGrid4 grid(t.channels(), t.shape());
    const auto& keys = t.index().keys();
    for (int32_t row = 0; row < t.active_count(); ++row) {
        for (int c = 0; c < t.channels(); ++c) {
            grid.at(c, keys[static_cast<size_t>(row)]) = t.features()(row, c);
        }
    }
    return grid;
}

SparseTensor3 dense_to_sparse(const DenseGrid4& grid) {
    auto index = std::make_shared<ActiveIndex>();
    std::vector<double> rows;
    Coord3 p;
    for (p.h = 0; p.h < grid.shape.h; ++p.h) {
        for (p.w = 0; p.w < grid.shape.w; ++p.w) {
            for (p.l = 0; p.l < grid.shape.l; ++p.l) {
                if (!grid.site_nonzero(p)) {
                    continue;
                }
                index->insert(p);
                for (int c = 0; c < grid.channels; ++c) {
                    rows.push_back(grid.at(c, p));
                }
            }
        }
    }
    FeatureMatrix features =
        Eigen::Map<const FeatureMatrix>(rows.data(), index->size(), grid.channels);
    return SparseTensor3(grid.shape, std::move(index), std::move(features));
}

void write_sites(std::ostream& os, const SparseTensor3& t) {
    std::vector<int32_t> order(static_cast<size_t>(t.active_count()));
    std::iota(order.begin(), order.end(), 0);
    const auto& keys = t.index().keys();
    std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        return keys[static_cast<size_t>(a)] < keys[static_cast<size_t>(b)];
    });
    for (int32_t row : order) {
        const Coord3& c = keys[static_cast<size_t>(row)];
        fmt::print(os, "{} {} {}", c.h, c.w, c.l);
        for (int ch = 0; ch < t.channels(); ++ch) {
            fmt::print(os, " {}", t.features()(row, ch));
        }
        os << '\n';
    }
}

} // namespace sp3d
