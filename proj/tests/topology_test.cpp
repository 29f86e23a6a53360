// Copyright 2026 The sicnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "oracles.hpp"
#include "sicnet/topology.hpp"

#include <gtest/gtest.h>

using namespace sicnet;
using T = Tensor4<double>;

TEST(Coords, RowMajorOneBased) {
  const std::vector<Index> dims{8, 16};
  EXPECT_EQ(channel_to_coords(1, dims), (std::vector<Index>{1, 1}));
  EXPECT_EQ(channel_to_coords(17, dims), (std::vector<Index>{2, 1}));
  EXPECT_EQ(channel_to_coords(16, dims), (std::vector<Index>{1, 16}));
  EXPECT_EQ(channel_to_coords(128, dims), (std::vector<Index>{8, 16}));
  for (Index j = 1; j <= 128; ++j) EXPECT_EQ(coords_to_channel(channel_to_coords(j, dims), dims), j);
  EXPECT_THROW(channel_to_coords(0, dims), std::out_of_range);
  EXPECT_THROW(channel_to_coords(129, dims), std::out_of_range);
  EXPECT_THROW(coords_to_channel({9, 1}, dims), std::out_of_range);
}

TEST(TopologyConfig, Validation) {
  EXPECT_NO_THROW((TopologyConfig{{8, 16}, {4, 8}}.validate()));
  EXPECT_THROW((TopologyConfig{{4}, {5}}.validate()), ConfigError);
  EXPECT_THROW((TopologyConfig{{4, 4}, {2}}.validate()), ConfigError);
  EXPECT_THROW((TopologyConfig{{}, {}}.validate()), ConfigError);
  EXPECT_THROW((TopologyConfig{{4, 0}, {1, 0}}.validate()), ConfigError);
}

TEST(TopoMask, FullNeighborhoodIsDense) {
  const auto m = topo_mask(TopologyConfig{{4}, {4}});
  EXPECT_TRUE(m.all());
  EXPECT_EQ(m.rows(), 4);
}

TEST(TopoMask, UnitNeighborhoodIsIdentity) {
  const auto m = topo_mask(TopologyConfig{{4}, {1}});
  for (Index j = 0; j < 4; ++j)
    for (Index i = 0; i < 4; ++i) EXPECT_EQ(m(j, i), i == j);
}

TEST(TopoMask, TwoDimensionalQuarter) {
  const TopologyConfig topo{{8, 16}, {4, 8}};
  const auto m = topo_mask(topo);
  for (Index j = 0; j < 128; ++j) EXPECT_EQ(m.row(j).count(), 32);
  EXPECT_EQ(topo.neighbors() * 4, topo.channels());
}

TEST(TopoMask, ThreeDimensionalRowSums) {
  const TopologyConfig topo{{4, 8, 4}, {2, 5, 3}};
  const auto m = topo_mask(topo);
  for (Index j = 0; j < 128; ++j) EXPECT_EQ(m.row(j).count(), 30);
  EXPECT_NEAR(128.0 / 30.0, 4.27, 0.005);
}

TEST(TopoMask, MatchesCoordinateFormula) {
  for (const TopologyConfig& topo : {TopologyConfig{{2, 4}, {1, 2}}, TopologyConfig{{4, 8, 4}, {2, 5, 3}},
                                     TopologyConfig{{3, 5}, {2, 4}}, TopologyConfig{{7}, {3}}}) {
    const auto ours = topo_mask(topo);
    const auto ref = oracle::topology_mask(topo.dims, topo.neighborhood);
    for (Index j = 0; j < topo.channels(); ++j)
      for (Index i = 0; i < topo.channels(); ++i) ASSERT_EQ(ours(j, i), ref[std::size_t(j)][std::size_t(i)]);
  }
}

TEST(TopoMask, CyclicShiftEquivariance) {
  const TopologyConfig topo{{4, 6}, {2, 3}};
  const auto m = topo_mask(topo);
  for (std::size_t axis = 0; axis < 2; ++axis)
    for (Index j = 1; j <= 24; ++j)
      for (Index i = 1; i <= 24; ++i) {
        auto jc = channel_to_coords(j, topo.dims);
        auto ic = channel_to_coords(i, topo.dims);
        jc[axis] = jc[axis] % topo.dims[axis] + 1;
        ic[axis] = ic[axis] % topo.dims[axis] + 1;
        EXPECT_EQ(m(j - 1, i - 1), m(coords_to_channel(jc, topo.dims) - 1, coords_to_channel(ic, topo.dims) - 1));
      }
}

TEST(TopoConv, MaskedDenseOracle) {
  std::mt19937_64 rng(21);
  const TopologyConfig topo{{2, 4}, {1, 2}};
  const auto x = T::Gaussian({2, 8, 5, 5}, rng);
  const TopoKernel<double> k{T::Gaussian({8, 2, 3, 3}, rng)};
  const auto dense = to_dense(k.weights, topo_connections(topo));
  const auto masked = oracle::apply_mask(dense.weights, oracle::topology_mask(topo.dims, topo.neighborhood));
  EXPECT_EQ(masked.vec(), dense.weights.vec());
  EXPECT_LT(max_abs_diff(topo_conv(x, k, topo), oracle::conv(x, masked, 1)), 1e-12);
}

TEST(TopoConv, FullNeighborhoodIsStandardConv) {
  std::mt19937_64 rng(22);
  const TopologyConfig topo{{6}, {6}};
  const auto x = T::Gaussian({1, 6, 4, 4}, rng);
  const auto dense = T::Gaussian({6, 6, 3, 3}, rng);
  // With a full 1-D window output j reads (j + t) mod n at slot t.
  T sparse(6, 6, 3, 3);
  for (Index j = 0; j < 6; ++j)
    for (Index t = 0; t < 6; ++t)
      for (Index u = 0; u < 3; ++u)
        for (Index v = 0; v < 3; ++v) sparse(j, t, u, v) = dense(j, (j + t) % 6, u, v);
  EXPECT_LT(max_abs_diff(topo_conv(x, TopoKernel<double>{sparse}, topo), conv_standard(x, ConvKernel<double>{dense}, 1)),
            1e-12);
}

TEST(TopoConv, WeightCountAndErrors) {
  const TopologyConfig topo{{8, 16}, {4, 8}};
  EXPECT_EQ(topo_connections(topo).sources.size() * 9, std::size_t(128 * 32 * 9));
  EXPECT_THROW(topo_conv(T(1, 6, 4, 4), TopoKernel<double>{T(8, 2, 3, 3)}, TopologyConfig{{2, 4}, {1, 2}}),
               ShapeError);
  EXPECT_THROW(topo_conv(T(1, 8, 4, 4), TopoKernel<double>{T(8, 2, 3, 3)}, TopologyConfig{{2, 4}, {3, 2}}),
               ConfigError);
}

TEST(GroupedConv, OneGroupIsStandard) {
  std::mt19937_64 rng(23);
  const auto x = T::Gaussian({2, 4, 5, 5}, rng);
  const ConvKernel<double> k{T::Gaussian({6, 4, 3, 3}, rng)};
  EXPECT_LT(max_abs_diff(grouped_conv(x, k, 1), conv_standard(x, k, 1)), 1e-12);
}

TEST(GroupedConv, PerChannelScaling) {
  std::mt19937_64 rng(24);
  const auto x = T::Gaussian({1, 5, 3, 3}, rng);
  T w(5, 1, 1, 1);
  for (Index c = 0; c < 5; ++c) w(c, 0, 0, 0) = double(c + 1);
  const auto out = grouped_conv(x, ConvKernel<double>{w}, 5);
  for (Index c = 0; c < 5; ++c)
    for (Index i = 0; i < 9; ++i) EXPECT_EQ(out.plane_ptr(0, c)[i], double(c + 1) * x.plane_ptr(0, c)[i]);
}

TEST(GroupedConv, BlockDiagonalMaskOracle) {
  std::mt19937_64 rng(25);
  const auto x = T::Gaussian({2, 8, 5, 5}, rng);
  const ConvKernel<double> k{T::Gaussian({8, 2, 3, 3}, rng)};
  const auto dense = to_dense(k.weights, grouped_connections(8, 8, 4));
  const auto masked = oracle::apply_mask(dense.weights, oracle::group_mask(8, 8, 4));
  EXPECT_EQ(masked.vec(), dense.weights.vec());
  EXPECT_LT(max_abs_diff(grouped_conv(x, k, 4), oracle::conv(x, masked, 1)), 1e-12);
  EXPECT_THROW(grouped_conv(x, k, 3), ShapeError);
  EXPECT_THROW(grouped_connections(8, 6, 4), ConfigError);
}
