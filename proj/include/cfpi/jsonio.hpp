#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cfpi::jsonio {

// Formats a double as decimal text with 17 significant digits (%.17g), the
// fixed float format for every JSON artifact this project writes. 17 digits
// round-trip IEEE doubles exactly, so identical runs produce byte-identical
// files.
std::string fmt_double(double v);

// Minimal streaming JSON writer with explicit key ordering. Used instead of
// a general JSON library for output so the byte layout of artifacts is fully
// pinned down (insertion order, float format, no locale surprises).
class Writer {
public:
  Writer& begin_obj();
  Writer& end_obj();
  Writer& begin_arr();
  Writer& end_arr();
  Writer& key(std::string_view k);
  Writer& num(double v);
  Writer& num_int(long long v);
  Writer& num_uint(unsigned long long v);
  Writer& str(std::string_view s);
  Writer& boolean(bool b);
  Writer& null();

  Writer& num_array(const std::vector<double>& xs);

  const std::string& out() const { return s_; }

private:
  void before_value();
  void escape_into(std::string_view s);

  std::string s_;
  // One flag per open container: true until the first element is written.
  std::vector<bool> first_;
  bool pending_key_ = false;
};

}  // namespace cfpi::jsonio
