// Copyright Contributors to the sp3d Project
// SPDX-License-Identifier: Apache-2.0
//
#include "sp3d/error.hpp"
#include "sp3d/params.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace sp3d {
namespace {

ParamStore sample_store() {
    ParamStore s;
    s.add("enc", LayerKind::Submanifold, 2, 3, {3, 3, 3}, {1, 1, 1});
    s.add("down", LayerKind::Standard, 3, 4, {3, 3, 3}, {2, 2, 2});
    s.add("head", LayerKind::Conv2d, 4, 5, {1, 1, 1}, {1, 1, 1});
    return s;
}

TEST(ParamStore, AddAndLookup) {
    auto s = sample_store();
    EXPECT_EQ(s.layers().size(), 3u);
    EXPECT_EQ(s.get("down").w.volume, 27);
    EXPECT_EQ(s.parameter_count(), (2u * 27 * 3 + 3) + (3u * 27 * 4 + 4) + (4u * 5 + 5));
    EXPECT_THROW(s.get("missing"), Error);
    EXPECT_THROW(s.add("enc", LayerKind::Linear, 1, 1, {1, 1, 1}, {1, 1, 1}), Error);
}

TEST(ParamStore, KindNamesRoundtrip) {
    for (auto k : {LayerKind::Standard, LayerKind::Submanifold, LayerKind::Transposed, LayerKind::Conv2d,
                   LayerKind::Deconv2d, LayerKind::Linear}) {
        EXPECT_EQ(layer_kind_from_string(to_string(k)), k);
    }
    EXPECT_THROW(layer_kind_from_string("dense"), Error);
}

TEST(WeightFile, RoundtripIsBitExact) {
    auto s = sample_store();
    std::mt19937_64 rng(1);
    s.init_he(rng);
    s.get("head").w.bias[2] = -0.125;
    std::stringstream buf;
    write_weights(buf, s);
    auto t = sample_store();
    read_weights(buf, t);
    for (size_t i = 0; i < s.layers().size(); ++i) {
        EXPECT_EQ(s.layers()[i].w.weights, t.layers()[i].w.weights);
        EXPECT_EQ(s.layers()[i].w.bias, t.layers()[i].w.bias);
    }
}

TEST(WeightFile, HeaderText) {
    auto s = sample_store();
    std::stringstream buf;
    write_weights(buf, s);
    std::string text = buf.str();
    EXPECT_EQ(text.rfind("SP3DW 1\nenc 2 3 3 3 3 1 1 1 submanifold\ndown 3 4 3 3 3 2 2 2 standard\n", 0), 0u);
}

TEST(WeightFile, RejectsMismatchAndTruncation) {
    auto s = sample_store();
    std::stringstream buf;
    write_weights(buf, s);
    std::string bytes = buf.str();

    ParamStore other;
    other.add("enc", LayerKind::Submanifold, 2, 4, {3, 3, 3}, {1, 1, 1});
    std::stringstream a(bytes);
    EXPECT_THROW(read_weights(a, other), Error);

    auto t = sample_store();
    std::stringstream truncated(bytes.substr(0, bytes.size() - 8));
    EXPECT_THROW(read_weights(truncated, t), Error);

    std::stringstream bad("SP3DW 2\nend\n");
    EXPECT_THROW(read_weights(bad, t), Error);
}

} // namespace
} // namespace sp3d
