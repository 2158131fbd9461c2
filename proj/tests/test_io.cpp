#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fab/io.hpp"

using namespace fab;

namespace {

std::size_t parse_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    io::read_grouped_csv(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Csv, ReadsGroups) {
  std::istringstream in("group,value\nb,1.5\na,2\n\"b\", -3e-1\r\n\na,+4\n");
  const auto d = io::read_grouped_csv(in);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.at("a"), (std::vector<double>{2.0, 4.0}));
  EXPECT_EQ(d.at("b"), (std::vector<double>{1.5, -0.3}));
}

TEST(Csv, ErrorsCarryLineNumbers) {
  EXPECT_EQ(parse_error_line("group,value\na,1\na,abc\n"), 3u);
  EXPECT_EQ(parse_error_line("group,value\na,1\na\n"), 3u);
  EXPECT_EQ(parse_error_line("group,value\na,1,2\n"), 2u);
  EXPECT_EQ(parse_error_line("group,value\n,1\n"), 2u);
  EXPECT_EQ(parse_error_line("group,value\na,inf\n"), 2u);
  EXPECT_EQ(parse_error_line("grp,val\na,1\n"), 1u);
  std::istringstream empty("");
  EXPECT_THROW(io::read_grouped_csv(empty), ParseError);
  std::istringstream header_only("group,value\n");
  EXPECT_THROW(io::read_grouped_csv(header_only), ParseError);
}

TEST(Csv, MissingFile) { EXPECT_THROW(io::read_grouped_csv(std::filesystem::path("/nonexistent/x.csv")), ParseError); }

TEST(Csv, FixtureShape) {
  const auto d = io::read_grouped_csv(std::filesystem::path(FAB_DATA_DIR) / "radon_like.csv");
  EXPECT_EQ(d.size(), 85u);
  std::size_t total = 0, ones = 0, largest = 0;
  for (const auto& [g, ys] : d) {
    total += ys.size();
    ones += ys.size() == 1;
    largest = std::max(largest, ys.size());
  }
  EXPECT_EQ(total, 919u);
  EXPECT_EQ(ones, 3u);
  EXPECT_EQ(largest, 116u);
}

TEST(AtomicWrite, ReplacesContent) {
  const auto dir = std::filesystem::temp_directory_path() / "fab_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "out.txt";
  io::write_atomic(path, "one\n");
  io::write_atomic(path, "two\n");
  std::ifstream in(path);
  std::string s((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(s, "two\n");
  EXPECT_FALSE(std::filesystem::exists(dir / "out.txt.tmp"));
  std::filesystem::remove_all(dir);
}

TEST(Format, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.901234567, 3.289707253902943}) {
    EXPECT_EQ(std::stod(io::fmt(v)), v);
  }
  EXPECT_EQ(io::fmt(NAN), "nan");
}
