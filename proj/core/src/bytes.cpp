#include "privrec/bytes.hpp"

#include <istream>
#include <iterator>
#include <ostream>

namespace privrec {

void write_stream(std::ostream& out, const Bytes& b) {
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw std::runtime_error("write failed");
}

Bytes read_stream(std::istream& in) {
  Bytes b{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return b;
}

}  // namespace privrec
