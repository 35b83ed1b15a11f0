#include "amtl/npy.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <string_view>

#include "amtl/error.hpp"

namespace amtl {

static_assert(std::endian::native == std::endian::little, "NPY support assumes a little-endian host");

namespace {

constexpr std::uint8_t kMagic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kPreamble = 10; // magic + version + header length

std::size_t product(const std::vector<std::size_t> &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_literal(const std::vector<std::size_t> &shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0)
      s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1)
    s += ",";
  return s + ")";
}

// Minimal reader for the header dict literal, e.g.
// {'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }
class HeaderParser {
public:
  explicit HeaderParser(std::string_view text) : s_(text) {}

  void parse(std::string &descr, bool &fortran, std::vector<std::size_t> &shape) {
    bool have_descr = false, have_order = false, have_shape = false;
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        break;
      }
      const std::string key = quoted();
      expect(':');
      if (key == "descr") {
        descr = quoted();
        have_descr = true;
      } else if (key == "fortran_order") {
        fortran = boolean();
        have_order = true;
      } else if (key == "shape") {
        shape = tuple();
        have_shape = true;
      } else {
        throw FormatError("npy header: unexpected key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect('}');
      break;
    }
    if (!have_descr || !have_order || !have_shape)
      throw FormatError("npy header: missing descr, fortran_order or shape");
  }

private:
  char peek() const {
    if (pos_ >= s_.size())
      throw FormatError("npy header: unexpected end");
    return s_[pos_];
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }
  void expect(char c) {
    skip_ws();
    if (peek() != c)
      throw FormatError(std::string("npy header: expected '") + c + "'");
    ++pos_;
  }
  std::string quoted() {
    skip_ws();
    const char q = peek();
    if (q != '\'' && q != '"')
      throw FormatError("npy header: expected a quoted string");
    const auto end = s_.find(q, pos_ + 1);
    if (end == std::string_view::npos)
      throw FormatError("npy header: unterminated string");
    std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }
  bool boolean() {
    skip_ws();
    if (s_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    throw FormatError("npy header: expected True or False");
  }
  std::vector<std::size_t> tuple() {
    std::vector<std::size_t> out;
    expect('(');
    while (true) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        return out;
      }
      if (!std::isdigit(static_cast<unsigned char>(peek())))
        throw FormatError("npy header: bad shape entry");
      std::size_t v = 0;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])))
        v = v * 10 + static_cast<std::size_t>(s_[pos_++] - '0');
      out.push_back(v);
      skip_ws();
      if (peek() == ',')
        ++pos_;
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

} // namespace

std::size_t NpyArray::element_count() const { return product(shape); }

NpyArray parse_npy(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreamble || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("npy: bad magic");
  if (bytes[6] != 1 || bytes[7] != 0)
    throw FormatError("npy: unsupported version " + std::to_string(bytes[6]) + "." + std::to_string(bytes[7]));
  const std::size_t header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
  if (bytes.size() < kPreamble + header_len)
    throw FormatError("npy: truncated header");
  const std::string_view header(reinterpret_cast<const char *>(bytes.data() + kPreamble), header_len);

  std::string descr;
  bool fortran = false;
  NpyArray out;
  HeaderParser(header).parse(descr, fortran, out.shape);
  if (fortran)
    throw FormatError("npy: fortran_order arrays are not supported");

  const std::size_t count = product(out.shape);
  const auto payload = bytes.subspan(kPreamble + header_len);
  if (descr == "|u1" || descr == "<u1") {
    if (payload.size() < count)
      throw FormatError("npy: truncated payload");
    out.data = std::vector<std::uint8_t>(payload.begin(), payload.begin() + static_cast<std::ptrdiff_t>(count));
  } else if (descr == "<f8") {
    if (payload.size() / sizeof(double) < count)
      throw FormatError("npy: truncated payload");
    std::vector<double> values(count);
    if (count > 0)
      std::memcpy(values.data(), payload.data(), count * sizeof(double));
    out.data = std::move(values);
  } else {
    throw FormatError("npy: unsupported dtype '" + descr + "'");
  }
  return out;
}

std::vector<std::uint8_t> write_npy(const NpyArray &array) {
  if (array.element_count() != std::visit([](const auto &v) { return v.size(); }, array.data))
    throw FormatError("npy: shape does not match the element count");

  const char *descr = array.type() == NpyType::UInt8 ? "|u1" : "<f8";
  std::string header = std::string("{'descr': '") + descr + "', 'fortran_order': False, 'shape': " +
                       shape_literal(array.shape) + ", }";
  const std::size_t unpadded = kPreamble + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  if (header.size() > 0xffff)
    throw FormatError("npy: header too long for version 1.0");

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(1);
  out.push_back(0);
  out.push_back(static_cast<std::uint8_t>(header.size() & 0xff));
  out.push_back(static_cast<std::uint8_t>(header.size() >> 8));
  out.insert(out.end(), header.begin(), header.end());
  std::visit(
      [&](const auto &values) {
        const auto *p = reinterpret_cast<const std::uint8_t *>(values.data());
        out.insert(out.end(), p, p + values.size() * sizeof(values[0]));
      },
      array.data);
  return out;
}

NpyArray read_npy_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_npy(bytes);
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_npy_file(const std::filesystem::path &path, const NpyArray &array) {
  const auto bytes = write_npy(array);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw IoError("write failed for " + path.string());
}

} // namespace amtl
