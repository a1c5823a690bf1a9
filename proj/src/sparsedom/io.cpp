#include "sparsedom/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sparsedom/errors.hpp"

namespace sparsedom {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

Json number_json(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

Json geometry_json(const RootGeometry& g) {
  Json origin = Json::array();
  for (int d = 0; d < g.dim; ++d) origin.push_back(g.origin[d]);
  return {{"n", g.dim}, {"L", g.depth}, {"side", g.side}, {"origin", origin}};
}

RootGeometry geometry_from_json(const Json& j) {
  try {
    RootGeometry g;
    g.dim = j.at("n").get<int>();
    g.depth = j.at("L").get<int>();
    g.side = j.value("side", 1.0);
    if (j.contains("origin")) {
      const auto& o = j.at("origin");
      if (!o.is_array() || static_cast<int>(o.size()) != g.dim)
        throw InvalidArgument("origin must have n entries");
      for (int d = 0; d < g.dim; ++d) g.origin[d] = o[d].get<double>();
    }
    g.validate();
    return g;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("bad geometry: ") + e.what());
  }
}

Json family_json(const RootGeometry& g, const SparseFamily& fam) {
  Json gens = Json::array();
  for (const auto& gen : fam.base.generations) {
    Json row = Json::array();
    for (const auto& c : gen) row.push_back(to_address(c, g.dim));
    gens.push_back(row);
  }
  return {{"eta", fam.eta}, {"generations", gens}};
}

Json report_json(const RootGeometry& g, const DominationReport& r, bool with_coefficients) {
  Json j;
  j["mode"] = r.mode;
  j["root"] = to_address(r.root, g.dim);
  j["eta"] = r.eta;
  j["r"] = r.r;
  if (r.mode == "bilinear") j["q"] = r.q;
  j["cr"] = r.cr;
  j["empirical_constant"] = number_json(r.empirical_constant);
  j["paper_bound"] = r.paper_bound;
  j["witness_leaf"] = r.witness_leaf;
  j["witness_lhs"] = number_json(r.witness_lhs);
  j["witness_rhs"] = number_json(r.witness_rhs);
  j["family_size"] = r.construction.family.base.size();
  j["generations"] = r.construction.family.base.generations.size();
  j["overlap"] = {{"max", r.overlap.above.empty() ? 0 : r.overlap.above.size() - 1},
                  {"above", r.overlap.above},
                  {"bound", r.overlap.bound},
                  {"ok", r.overlap.ok}};
  if (with_coefficients) {
    Json coef = Json::array();
    for (const auto& [cube, gamma] : r.coefficients()) coef.push_back({to_address(cube, g.dim), gamma});
    j["coefficients"] = coef;
  }
  j["passed"] = r.passed;
  j["failures"] = r.failures;
  return j;
}

Json ellr_json(const RootGeometry& g, const EllrResult& r) {
  Json chain = Json::array();
  for (const auto& c : r.witness_chain) chain.push_back(to_address(c, g.dim));
  return {{"constant", number_json(r.constant)},
          {"exhaustive", r.exhaustive},
          {"chains", r.chains},
          {"witness_leaf", r.witness_leaf},
          {"witness_chain", chain}};
}

Json tent_json(const RootGeometry& g, const TentReport& r, bool with_coefficients) {
  return {{"engine", report_json(g, r.engine, with_coefficients)},
          {"constant", number_json(r.constant)},
          {"witness_leaf", r.witness_leaf},
          {"sandwich_ok", r.sandwich_ok},
          {"sandwich_worst", r.sandwich_worst},
          {"ellr", ellr_json(g, r.ellr)},
          {"passed", r.passed},
          {"failures", r.failures}};
}

Json square_json(const RootGeometry& g, const SquareReport& r, bool with_coefficients) {
  return {{"engine", report_json(g, r.engine, with_coefficients)},
          {"constant", number_json(r.constant)},
          {"witness_leaf", r.witness_leaf},
          {"kernel",
           {{"ok", r.kernel.ok},
            {"integral", r.kernel.integral},
            {"size_worst", r.kernel.size_worst},
            {"holder_worst", r.kernel.holder_worst},
            {"violations", r.kernel.violations}}},
          {"ellr", ellr_json(g, r.ellr)},
          {"tail_bound", r.tail_bound},
          {"weak_l1", r.weak_l1},
          {"passed", r.passed},
          {"failures", r.failures}};
}

Json poincare_json(const RootGeometry& g, const PoincareReport& r, bool with_coefficients) {
  return {{"engine", report_json(g, r.engine, with_coefficients)},
          {"m", r.m},
          {"constant", number_json(r.constant)},
          {"coefficient_constant", number_json(r.coefficient_constant)},
          {"projection_sup_constant", number_json(r.projection_sup_constant)},
          {"passed", r.passed},
          {"failures", r.failures}};
}

Json self_improve_json(const RootGeometry&, const SelfImproveReport& r) {
  return {{"vacuous", r.vacuous},
          {"vacuous_reason", r.vacuous_reason},
          {"mode", r.mode == SelfImproveMode::Pointwise ? "pointwise" : "local-maximal"},
          {"lhs", number_json(r.lhs)},
          {"k", number_json(r.k)},
          {"sparse_side", number_json(r.sparse_side)},
          {"a_side", number_json(r.a_side)},
          {"rhs", number_json(r.rhs)},
          {"geometric_factor", number_json(r.geometric_factor)},
          {"integral_factor", number_json(r.integral_factor)},
          {"normalized", number_json(r.normalized)},
          {"measured_norm", number_json(r.measured_norm)},
          {"norm_exact", r.norm_exact},
          {"passed", r.passed},
          {"failures", r.failures}};
}

Json sum_sparse_json(const RootGeometry& g, const SumSparseReport& r, bool with_coefficients) {
  return {{"engine", report_json(g, r.engine, with_coefficients)},
          {"smallness", number_json(r.smallness)},
          {"delta", r.delta},
          {"constant", number_json(r.constant)},
          {"reference_bound", number_json(r.reference_bound)},
          {"chebyshev_factor", number_json(r.chebyshev_factor)},
          {"passed", r.passed},
          {"failures", r.failures}};
}

Json curve_json(const GoodLambdaCurve& c) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < c.rows.size(); ++i) {
    const auto& r = c.rows[i];
    rows.push_back({{"lambda", r.lambda},
                    {"gamma_or_eps", r.gamma_or_eps},
                    {"bad_measure", r.bad_measure},
                    {"superlevel_measure", r.superlevel_measure},
                    {"ratio", r.ratio},
                    {"overlap_min", number_json(r.overlap_min)},
                    {"certificate_min", number_json(i < c.certificate_min.size() ? c.certificate_min[i] : NAN)}});
  }
  return {{"rows", rows}, {"passed", c.passed}, {"failures", c.failures}};
}

Json coefficients_json(const CubeCoefficients& c) {
  Json out = Json::array();
  for (const auto& [cube, v] : c.entries()) out.push_back({to_address(cube, c.geometry().dim), v});
  return out;
}

void write_curve_csv(std::ostream& out, const GoodLambdaCurve& c) {
  out << "lambda,gamma_or_eps,bad_measure,superlevel_measure,ratio,overlap_min\n";
  for (const auto& r : c.rows)
    out << format_double(r.lambda) << ',' << format_double(r.gamma_or_eps) << ','
        << format_double(r.bad_measure) << ',' << format_double(r.superlevel_measure) << ','
        << format_double(r.ratio) << ',' << format_double(r.overlap_min) << '\n';
}

namespace {

double parse_double(std::string_view s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("bad number in CSV: " + std::string(s));
  return v;
}

}  // namespace

std::vector<GoodLambdaRow> parse_curve_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "lambda,gamma_or_eps,bad_measure,superlevel_measure,ratio,overlap_min")
    throw ParseError("unexpected CSV header");
  std::vector<GoodLambdaRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      v.push_back(parse_double(std::string_view(line).substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (v.size() != 6) throw ParseError("CSV row needs 6 columns");
    rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
  }
  return rows;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

void save_gridfn(const std::string& path, const GridFunction& f, bool binary) {
  Json header = geometry_json(f.geometry);
  if (!binary) {
    header["values"] = f.values;
    write_text(path, header.dump() + "\n");
    return;
  }
  header["encoding"] = "f64le";
  std::string body = header.dump() + "\n";
  const std::size_t at = body.size();
  body.resize(at + 8 * f.values.size());
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(f.values[i]);
    for (int b = 0; b < 8; ++b) body[at + 8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  write_text(path, body);
}

GridFunction load_gridfn(const std::string& path) {
  const std::string text = read_text(path);
  const std::size_t eol = text.find('\n');
  Json header;
  try {
    header = Json::parse(text.substr(0, eol));
  } catch (const Json::exception&) {
    try {
      header = Json::parse(text);
    } catch (const Json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
  }
  const RootGeometry g = geometry_from_json(header);
  if (header.value("encoding", std::string()) == "f64le") {
    const std::size_t at = eol + 1;
    if (eol == std::string::npos || text.size() - at != 8 * g.leaf_count())
      throw ParseError(path + ": binary payload has wrong size");
    std::vector<double> v(g.leaf_count());
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(text[at + 8 * i + b])) << (8 * b);
      v[i] = std::bit_cast<double>(bits);
    }
    return GridFunction(g, std::move(v));
  }
  try {
    return GridFunction(g, header.at("values").get<std::vector<double>>());
  } catch (const Json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void save_halfspace(const std::string& path, const HalfSpaceFunction& F) {
  Json j = geometry_json(F.geometry);
  j["bands"] = F.bands();
  j["values"] = F.values;
  write_text(path, j.dump() + "\n");
}

HalfSpaceFunction load_halfspace(const std::string& path) {
  try {
    const Json j = Json::parse(read_text(path));
    const RootGeometry g = geometry_from_json(j);
    if (j.at("bands").get<int>() != g.depth) throw ParseError(path + ": bands must equal L");
    return HalfSpaceFunction(g, j.at("values").get<std::vector<std::vector<double>>>());
  } catch (const Json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace sparsedom
