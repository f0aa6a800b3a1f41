#include <gtest/gtest.h>

#include <sstream>

#include "linac/lnt1.hpp"
#include "linac/tensor.hpp"

using namespace linac;

TEST(Tensor, ShapeAndFill) {
  Tensor<float> t({2, 3, 4}, 1.5f);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(t.item_size(), 12u);
  for (float v : t.values()) EXPECT_EQ(v, 1.5f);
}

TEST(Tensor, RejectsWrongDataLength) {
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), std::invalid_argument);
  EXPECT_THROW(Tensor<float>({2, 2}).reshaped({3}), std::invalid_argument);
}

TEST(Tensor, SliceAndItemAreRowMajor) {
  std::vector<float> v(12);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  Tensor<float> t({3, 2, 2}, v);
  const auto s = t.slice(1, 2);
  EXPECT_EQ(s.dims(), (Dims{2, 2, 2}));
  EXPECT_EQ(s[0], 4.0f);
  EXPECT_EQ(t.item(2)[3], 11.0f);
  EXPECT_THROW(t.slice(2, 2), std::out_of_range);
}

TEST(Tensor, StackAddsLeadingAxis) {
  std::vector<Tensor<double>> items{Tensor<double>({2}, 1.0), Tensor<double>({2}, 2.0)};
  const auto s = stack<double>(items);
  EXPECT_EQ(s.dims(), (Dims{2, 2}));
  EXPECT_EQ(s[3], 2.0);
}

TEST(Tensor, FiniteCheck) {
  Tensor<float> t({2});
  EXPECT_NO_THROW(require_finite(t, "t"));
  t[1] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(require_finite(t, "t"), NonFiniteError);
}

TEST(Lnt1, ByteLayoutMatchesHandEncoding) {
  Tensor<float> t({2, 1}, std::vector<float>{1.0f, -2.0f});
  std::ostringstream os;
  lnt1::write(os, t);
  // 1.0f = 0x3F800000, -2.0f = 0xC0000000, little-endian.
  const std::string expected{'L', 'N', 'T', '1', 0, 2,    2,    0, 0, 0, 1, 0, 0, 0,
                             0,   0,   char(0x80), char(0x3F), 0, 0, 0, char(0xC0)};
  EXPECT_EQ(os.str(), expected);
}

TEST(Lnt1, DoubleRoundTripIsExact) {
  Tensor<double> t({3}, std::vector<double>{0.1, -1e300, 5e-324});
  std::stringstream ss;
  lnt1::write(ss, t);
  const auto any = lnt1::read_any(ss);
  ASSERT_TRUE(std::holds_alternative<Tensor<double>>(any));
  EXPECT_EQ(std::get<Tensor<double>>(any), t);
  EXPECT_EQ(ss.str().size(), 4u + 2u + 4u + 24u);
}

TEST(Lnt1, FileRoundTripAndConversion) {
  const auto path = std::filesystem::temp_directory_path() / "lnt1_roundtrip_test.lnt1";
  Tensor<float> t({2, 2, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i) * 0.25f;
  lnt1::save(path, t);
  EXPECT_EQ(lnt1::load<float>(path), t);
  const auto d = lnt1::load<double>(path);
  EXPECT_EQ(d[5], 1.25);
  std::filesystem::remove(path);
}

TEST(Lnt1, RejectsBadInput) {
  std::istringstream bad_magic("LNT2\0\1");
  EXPECT_THROW(lnt1::read<float>(bad_magic), std::runtime_error);
  std::string hdr{'L', 'N', 'T', '1', 7, 0};
  std::istringstream bad_dtype(hdr);
  EXPECT_THROW(lnt1::read<float>(bad_dtype), std::runtime_error);
  std::string trunc{'L', 'N', 'T', '1', 0, 1, 4, 0, 0, 0, 0, 0};
  std::istringstream truncated(trunc);
  EXPECT_THROW(lnt1::read<float>(truncated), std::runtime_error);
}
