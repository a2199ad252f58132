#include <doctest.h>

#include <cstdlib>
#include <string>

#include <json.hpp>

#include "cfpi/jsonio.hpp"

using cfpi::jsonio::Writer;
using cfpi::jsonio::fmt_double;

TEST_CASE("fmt_double round-trips doubles exactly") {
  const double cases[] = {0.0,       1.0,        -1.5,      1.0 / 3.0,
                          1e-300,    -2.5e300,   3.14159,   5e-324,
                          1234567.0, 0.1 + 0.2,  -0.0};
  for (double v : cases) {
    const std::string s = fmt_double(v);
    const double back = std::strtod(s.c_str(), nullptr);
    CHECK(back == v);
  }
}

TEST_CASE("fmt_double is plain decimal text") {
  CHECK(fmt_double(1.0) == "1");
  CHECK(fmt_double(-2.0) == "-2");
  CHECK(fmt_double(0.5) == "0.5");
}

TEST_CASE("writer produces parseable nested JSON with ordered keys") {
  Writer w;
  w.begin_obj();
  w.key("b").num(1.5);
  w.key("a").begin_arr().num_int(1).num_int(2).end_arr();
  w.key("s").str("hi\n\"there\"\\");
  w.key("flag").boolean(true);
  w.key("nmuch").null();
  w.key("nested").begin_obj().key("x").num_uint(7).end_obj();
  w.end_obj();

  // Insertion order is preserved verbatim.
  CHECK(w.out().substr(0, 9) == "{\"b\":1.5,");

  auto j = nlohmann::json::parse(w.out());
  CHECK(j["b"] == 1.5);
  CHECK(j["a"] == nlohmann::json::array({1, 2}));
  CHECK(j["s"] == "hi\n\"there\"\\");
  CHECK(j["flag"] == true);
  CHECK(j["nmuch"].is_null());
  CHECK(j["nested"]["x"] == 7);
}

TEST_CASE("num_array writes every element") {
  Writer w;
  w.begin_obj();
  w.key("v").num_array({1.0, 0.25, -3.0});
  w.end_obj();
  auto j = nlohmann::json::parse(w.out());
  CHECK(j["v"].size() == 3);
  CHECK(j["v"][1] == 0.25);
}

TEST_CASE("identical writes give identical bytes") {
  auto make = [] {
    Writer w;
    w.begin_obj();
    w.key("x").num(0.1 + 0.2);
    w.key("y").num(1e17);
    w.end_obj();
    return w.out();
  };
  CHECK(make() == make());
}

TEST_CASE("control characters are escaped") {
  Writer w;
  w.begin_obj();
  w.key("c").str(std::string("\x01\t", 2));
  w.end_obj();
  CHECK(w.out().find("\\u0001") != std::string::npos);
  CHECK(w.out().find("\\t") != std::string::npos);
  CHECK(nlohmann::json::parse(w.out())["c"] == std::string("\x01\t", 2));
}
