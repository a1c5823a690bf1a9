#include "sparsedom/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

#include "sparsedom/dyadic_sums.hpp"
#include "sparsedom/errors.hpp"
#include "sparsedom/family.hpp"
#include "sparsedom/poincare.hpp"
#include "sparsedom/random.hpp"
#include "sparsedom/sparse_engine.hpp"
#include "sparsedom/square.hpp"

namespace sparsedom {

namespace {

const std::set<std::string> kSubcommands = {"verify-sparse", "bilinear", "ellr-check",      "poincare",
                                            "tent",          "square",   "potential",       "goodlambda-tent",
                                            "goodlambda-sums", "generate"};

enum class InputType { Grid, Measure, HalfSpace, Weight };

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw InvalidArgument(where + ": " + what);
}

// Typed access to one JSON object with defaults; remembers which keys are
// allowed so that anything else can be rejected.
class Section {
 public:
  Section(std::string name, const Json& in) : name_(std::move(name)), in_(in.is_null() ? Json::object() : in) {
    if (!in_.is_object()) bad(name_, "must be an object");
  }

  double number(const std::string& key, double fallback) {
    allowed_.insert(key);
    if (!in_.contains(key)) return out_[key] = fallback, fallback;
    if (!in_[key].is_number()) bad(name_ + "." + key, "must be a number");
    const double v = in_[key].get<double>();
    if (!std::isfinite(v)) bad(name_ + "." + key, "must be finite");
    out_[key] = v;
    return v;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    allowed_.insert(key);
    if (!in_.contains(key)) return out_[key] = fallback, fallback;
    if (!in_[key].is_number_integer()) bad(name_ + "." + key, "must be an integer");
    const auto v = in_[key].get<std::int64_t>();
    out_[key] = v;
    return v;
  }

  bool boolean(const std::string& key, bool fallback) {
    allowed_.insert(key);
    if (!in_.contains(key)) return out_[key] = fallback, fallback;
    if (!in_[key].is_boolean()) bad(name_ + "." + key, "must be true or false");
    return out_[key] = in_[key].get<bool>(), in_[key].get<bool>();
  }

  std::string choice(const std::string& key, const std::string& fallback, const std::set<std::string>& options) {
    allowed_.insert(key);
    std::string v = fallback;
    if (in_.contains(key)) {
      if (!in_[key].is_string()) bad(name_ + "." + key, "must be a string");
      v = in_[key].get<std::string>();
    }
    if (!options.count(v)) {
      std::string list;
      for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
      bad(name_ + "." + key, "must be one of " + list);
    }
    out_[key] = v;
    return v;
  }

  std::string text(const std::string& key) {
    allowed_.insert(key);
    if (!in_.contains(key) || !in_[key].is_string()) bad(name_ + "." + key, "is required and must be a string");
    return out_[key] = in_[key].get<std::string>(), in_[key].get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) {
    allowed_.insert(key);
    std::vector<double> v = fallback;
    if (in_.contains(key)) {
      if (!in_[key].is_array()) bad(name_ + "." + key, "must be an array of numbers");
      v.clear();
      for (const auto& x : in_[key]) {
        if (!x.is_number()) bad(name_ + "." + key, "must be an array of numbers");
        v.push_back(x.get<double>());
      }
    }
    out_[key] = v;
    return v;
  }

  // Keeps an arbitrary JSON value as given.
  Json raw(const std::string& key, const Json& fallback) {
    allowed_.insert(key);
    const Json v = in_.contains(key) ? in_[key] : fallback;
    out_[key] = v;
    return v;
  }

  bool has(const std::string& key) const { return in_.contains(key); }

  Json finish() {
    for (const auto& [key, value] : in_.items())
      if (!allowed_.count(key)) bad(name_, "unknown key '" + key + "'");
    return out_;
  }

 private:
  std::string name_;
  Json in_;
  Json out_ = Json::object();
  std::set<std::string> allowed_;
};

void require(bool ok, const std::string& where, const std::string& what) {
  if (!ok) bad(where, what);
}

Json normalize_input(const Json& in, InputType type, int dim) {
  Section s("input", in);
  std::string kind;
  switch (type) {
    case InputType::Grid:
      kind = s.choice("kind", "uniform", {"uniform", "spiky", "smooth", "file"});
      break;
    case InputType::Measure:
      kind = s.choice("kind", "measure", {"measure", "file"});
      break;
    case InputType::HalfSpace:
      kind = s.choice("kind", "uniform", {"uniform", "spiky", "file"});
      break;
    case InputType::Weight:
      kind = s.choice("kind", "one", {"one", "power", "file"});
      break;
  }
  if (kind == "file") {
    s.text("path");
  } else if (kind == "uniform") {
    const double lo = s.number("low", 0.0), hi = s.number("high", 1.0);
    require(lo < hi, "input", "low must be below high");
    if (type == InputType::HalfSpace) s.choice("support", "root", {"root", "ambient"});
  } else if (kind == "spiky") {
    require(s.integer("atoms", 1) >= 1, "input.atoms", "must be at least 1");
    s.number("height", 1.0);
  } else if (kind == "smooth") {
    require(s.integer("modes", 3) >= 1, "input.modes", "must be at least 1");
  } else if (kind == "measure") {
    require(s.integer("atoms", 1) >= 0, "input.atoms", "must be nonnegative");
  } else if (kind == "power") {
    s.number("a", 0.5);
    require(s.number("floor", 1e-3) > 0.0, "input.floor", "must be positive");
    if (s.has("center")) {
      const auto c = s.numbers("center", {});
      require(static_cast<int>(c.size()) == dim, "input.center", "must have n entries");
    }
  }
  return s.finish();
}

std::vector<std::uint64_t> read_seeds(const Json& config) {
  if (!config.contains("seeds") || !config["seeds"].is_array() || config["seeds"].empty())
    bad("seeds", "a nonempty array of unsigned 64-bit integers is required");
  std::vector<std::uint64_t> seeds;
  for (const auto& s : config["seeds"]) {
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
      bad("seeds", "entries must be nonnegative integers");
    seeds.push_back(s.get<std::uint64_t>());
  }
  return seeds;
}

std::string family_kind(const Json& family) {
  return family.contains("kind") && family["kind"].is_string() ? family["kind"].get<std::string>() : "";
}

InputType family_input(const std::string& kind) {
  if (kind == "tent") return InputType::HalfSpace;
  if (kind == "dyadic-sums") return InputType::Measure;
  return InputType::Grid;
}

// Normalizes the family section and returns the family's own r when fixed.
Json normalize_family(const Json& in, const RootGeometry& g, std::optional<double>& fixed_r) {
  Section s("family", in);
  const std::string kind =
      s.choice("kind", "canonical", {"canonical", "operator", "lmo", "poincare", "tent", "square", "dyadic-sums"});
  if (kind == "canonical") {
    s.choice("map", "maximal", {"maximal", "oscillation", "identity"});
  } else if (kind == "operator") {
    s.choice("operator", "box", {"identity", "average", "box", "maximal"});
    const auto level = s.integer("level", 1);
    require(level >= 0 && level <= g.depth, "family.level", "must lie in [0, L]");
    require(s.integer("radius", 1) >= 0, "family.radius", "must be nonnegative");
    require(s.number("alpha", 3.0) >= 1.0, "family.alpha", "must be at least 1");
  } else if (kind == "lmo") {
    const double l = s.number("lambda", 0.25);
    require(l > 0.0 && l < 0.5, "family.lambda", "must lie in (0, 1/2)");
    fixed_r = 1.0;
  } else if (kind == "poincare") {
    require(s.integer("m", 0) >= 0, "family.m", "must be nonnegative");
    s.boolean("maximal", false);
    fixed_r = 1.0;
  } else if (kind == "tent") {
    require(s.number("alpha", 1.0) > 0.0, "family.alpha", "must be positive");
    fixed_r = 2.0;
  } else if (kind == "square") {
    s.choice("kernel", "gaussian-difference", {"gaussian-difference", "zero", "power-decay"});
    const double q = s.number("q", 2.0);
    require(q >= 1.0, "family.q", "must be at least 1");
    fixed_r = q;
  } else {
    const double gamma = s.number("gamma", 0.5);
    require(gamma > 0.0 && gamma < g.dim, "family.gamma", "must lie in (0, n)");
    fixed_r = 1.0;
  }
  return s.finish();
}

double eta_param(Section& p) {
  const double eta = p.number("eta", 0.5);
  require(eta > 0.0 && eta < 1.0, "params.eta", "must lie in (0, 1)");
  return eta;
}

void check_fraction_list(const std::vector<double>& v, const std::string& where, bool open_top) {
  require(!v.empty(), where, "must not be empty");
  for (double x : v)
    require(open_top ? (x > 0.0 && x < 1.0) : (x >= 0.0 && x <= 1.0), where,
            open_top ? "entries must lie in (0, 1)" : "entries must lie in [0, 1]");
}

double quantile(std::vector<double> values, double q) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !(v > 0.0); }), values.end());
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto i = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size() - 1)));
  return values[i];
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

bool known_subcommand(const std::string& name) { return kSubcommands.count(name) > 0; }

Json normalize_config(const std::string& sub, const Json& config) {
  if (!known_subcommand(sub)) bad("subcommand", "unknown subcommand '" + sub + "'");
  if (!config.is_object()) throw ParseError("config must be a JSON object");
  static const std::set<std::string> top = {"experiment", "geometry", "input",  "weight",
                                            "family",     "params",   "seeds",  "outputs"};
  for (const auto& [key, value] : config.items())
    if (!top.count(key)) bad("config", "unknown key '" + key + "'");
  if (config.contains("experiment") && config["experiment"] != sub)
    bad("experiment", "does not match the subcommand '" + sub + "'");
  if (!config.contains("geometry")) bad("geometry", "is required");
  Section geo("geometry", config["geometry"]);
  geo.integer("n", 1);
  geo.integer("L", 1);
  geo.number("side", 1.0);
  if (geo.has("origin")) geo.numbers("origin", {});
  Json out;
  out["experiment"] = sub;
  out["geometry"] = geo.finish();
  const RootGeometry g = geometry_from_json(out["geometry"]);
  out["seeds"] = read_seeds(config);

  Section outs("outputs", config.value("outputs", Json::object()));
  outs.boolean("coefficients", false);
  out["outputs"] = outs.finish();

  Section p("params", config.value("params", Json::object()));
  const bool uses_family = sub == "verify-sparse" || sub == "bilinear" || sub == "ellr-check";
  if (!uses_family && config.contains("family")) bad("family", "is not used by " + sub);
  if (sub != "poincare" && sub != "generate" && config.contains("weight")) bad("weight", "is not used by " + sub);

  InputType input_type = InputType::Grid;
  if (uses_family) {
    const Json fam_in = config.value("family", Json::object());
    std::optional<double> fixed_r;
    out["family"] = normalize_family(fam_in, g, fixed_r);
    input_type = family_input(family_kind(out["family"]));
    eta_param(p);
    if (fixed_r) {
      if (p.has("r") && p.number("r", *fixed_r) != *fixed_r)
        bad("params.r", "is fixed to " + format_double(*fixed_r) + " by this family");
      p.number("r", *fixed_r);
    } else {
      require(p.number("r", 1.0) > 0.0, "params.r", "must be positive");
    }
    if (sub == "bilinear") {
      const double r = p.number("r", 1.0);
      const double q = p.number("q", 2.0);
      require(q > r, "params.q", "must exceed r");
      p.choice("g", "random", {"one", "random"});
    }
    if (sub == "ellr-check") {
      p.boolean("exhaustive", g.dim == 1 && g.depth <= 6);
      require(p.integer("samples", 4096) >= 0, "params.samples", "must be nonnegative");
    }
  } else if (sub == "poincare") {
    eta_param(p);
    require(p.integer("m", 0) >= 0, "params.m", "must be nonnegative");
    require(p.number("p", 1.0) >= 1.0, "params.p", "must be at least 1");
    require(p.number("s", 1.0) >= 1.0, "params.s", "must be at least 1");
    require(p.number("r", 2.0) > 1.0, "params.r", "must exceed 1");
    p.choice("mode", "pointwise", {"pointwise", "MQ", "ratio"});
    const auto fn = p.choice("functional", "oscillation", {"oscillation", "power", "gradient", "table"});
    require(p.number("scale", 1.0) >= 0.0, "params.scale", "must be nonnegative");
    p.number("exponent", 0.0);
    const Json table = p.raw("table", Json::array());
    if (fn == "table") {
      require(table.is_array() && !table.empty(), "params.table", "must list [address, value] pairs");
      for (const auto& e : table) {
        require(e.is_array() && e.size() == 2 && e[0].is_string() && e[1].is_number(), "params.table",
                "entries must be [address, value]");
        parse_address(e[0].get<std::string>(), g.dim);
      }
    }
    require(p.integer("exact_cells", 4096) >= 0, "params.exact_cells", "must be nonnegative");
    require(p.integer("random_antichains", 64) >= 0, "params.random_antichains", "must be nonnegative");
    out["weight"] = normalize_input(config.value("weight", Json::object()), InputType::Weight, g.dim);
  } else if (sub == "tent" || sub == "goodlambda-tent") {
    input_type = InputType::HalfSpace;
    require(p.number("alpha", 1.0) > 0.0, "params.alpha", "must be positive");
    if (sub == "tent") {
      eta_param(p);
    } else {
      const auto lambdas = p.numbers("lambdas", {});
      for (double l : lambdas) require(l > 0.0, "params.lambdas", "entries must be positive");
      if (lambdas.empty()) check_fraction_list(p.numbers("lambda_quantiles", {0.5, 0.75, 0.9}), "params.lambda_quantiles", false);
      const auto gammas = p.numbers("gammas", {0.25, 0.5, 1.0});
      require(!gammas.empty(), "params.gammas", "must not be empty");
      for (double x : gammas) require(x > 0.0 && x <= 1.0, "params.gammas", "entries must lie in (0, 1]");
    }
  } else if (sub == "square") {
    eta_param(p);
    require(p.number("q", 2.0) >= 1.0, "params.q", "must be at least 1");
    p.choice("kernel", "gaussian-difference", {"gaussian-difference", "zero", "power-decay"});
  } else if (sub == "potential" || sub == "goodlambda-sums") {
    input_type = InputType::Measure;
    const double gamma = p.number("gamma", 0.5);
    require(gamma > 0.0 && gamma < g.dim, "params.gamma", "must lie in (0, n)");
    const double q = p.number("q", 1.0);
    require(q > 0.0, "params.q", "must be positive");
    const double delta = p.number("delta", std::min(1.0, q));
    require(delta > 0.0 && delta <= std::min(1.0, q), "params.delta", "must lie in (0, min(1, q)]");
    eta_param(p);
    const auto lambdas = p.numbers("lambdas", {});
    for (double l : lambdas) require(l > 0.0, "params.lambdas", "entries must be positive");
    if (lambdas.empty()) check_fraction_list(p.numbers("lambda_quantiles", {0.5, 0.75, 0.9}), "params.lambda_quantiles", false);
    check_fraction_list(p.numbers("eps_grid", {0.25, 0.5, 0.75}), "params.eps_grid", true);
  } else if (sub == "generate") {
    const Json in = config.value("input", Json::object());
    const std::string type = in.is_object() && in.contains("type") && in["type"].is_string()
                                 ? in["type"].get<std::string>()
                                 : "grid";
    if (type == "grid") input_type = InputType::Grid;
    else if (type == "measure") input_type = InputType::Measure;
    else if (type == "halfspace") input_type = InputType::HalfSpace;
    else if (type == "weight") input_type = InputType::Weight;
    else bad("input.type", "must be one of grid, measure, halfspace, weight");
    Json stripped = in;
    if (stripped.is_object()) stripped.erase("type");
    out["input"] = normalize_input(stripped, input_type, g.dim);
    out["input"]["type"] = type;
    if (config.contains("weight")) out["weight"] = normalize_input(config["weight"], InputType::Weight, g.dim);
  }
  out["params"] = p.finish();
  if (sub != "generate") out["input"] = normalize_input(config.value("input", Json::object()), input_type, g.dim);
  return out;
}

GridFunction generate_gridfn(const RootGeometry& g, const Json& spec, std::uint64_t seed) {
  const std::string kind = spec.value("kind", std::string("uniform"));
  if (kind == "file") {
    GridFunction f = load_gridfn(spec.at("path").get<std::string>());
    if (!(f.geometry == g)) throw InvalidArgument("input file geometry differs from the config");
    return f;
  }
  SplitMix64 rng(seed);
  const std::uint64_t n = g.leaf_count();
  std::vector<double> v(n, 0.0);
  if (kind == "uniform") {
    const double lo = spec.value("low", 0.0), hi = spec.value("high", 1.0);
    for (auto& x : v) x = rng.uniform(lo, hi);
  } else if (kind == "spiky") {
    const auto atoms = spec.value("atoms", std::int64_t{1});
    const double height = spec.value("height", 1.0);
    for (std::int64_t a = 0; a < atoms; ++a) v[rng.below(n)] += height;
  } else if (kind == "smooth") {
    const auto modes = spec.value("modes", std::int64_t{3});
    for (std::int64_t k = 0; k < modes; ++k) {
      std::array<double, kMaxDim> freq{};
      for (int d = 0; d < g.dim; ++d) freq[d] = static_cast<double>(rng.below(4));
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double amp = rng.uniform(-1.0, 1.0);
      double norm = 0.0;
      for (int d = 0; d < g.dim; ++d) norm += freq[d] * freq[d];
      for (std::uint64_t i = 0; i < n; ++i) {
        const CellIndex c = rowmajor_leaf(g, i);
        double arg = phase;
        for (int d = 0; d < g.dim; ++d)
          arg += 2.0 * std::numbers::pi * freq[d] * (c[d] + 0.5) / g.axis_cells();
        v[i] += amp / (1.0 + std::sqrt(norm)) * std::cos(arg);
      }
    }
  } else {
    throw InvalidArgument("unknown grid input kind: " + kind);
  }
  return GridFunction(g, std::move(v));
}

GridFunction generate_measure(const RootGeometry& g, const Json& spec, std::uint64_t seed) {
  const std::string kind = spec.value("kind", std::string("measure"));
  if (kind == "file") return generate_gridfn(g, spec, seed);
  const auto atoms = spec.value("atoms", std::int64_t{1});
  std::vector<double> v(g.leaf_count(), 0.0);
  if (atoms == 0) {
    std::fill(v.begin(), v.end(), g.cell_measure());
  } else {
    SplitMix64 rng(seed);
    for (std::int64_t a = 0; a < atoms; ++a) {
      const std::uint64_t cell = rng.below(v.size());
      v[cell] += 1.0 - rng.uniform();
    }
  }
  return GridFunction(g, std::move(v));
}

GridFunction generate_weight(const RootGeometry& g, const Json& spec, std::uint64_t seed) {
  const std::string kind = spec.value("kind", std::string("one"));
  if (kind == "file") {
    GridFunction w = generate_gridfn(g, spec, seed);
    for (double x : w.values)
      if (!(x > 0.0)) throw InvalidArgument("weights must be positive");
    return w;
  }
  std::vector<double> v(g.leaf_count(), 1.0);
  if (kind == "power") {
    SplitMix64 rng(seed);
    std::array<double, kMaxDim> center{};
    if (spec.contains("center")) {
      for (int d = 0; d < g.dim; ++d) center[d] = spec["center"][d].get<double>();
    } else {
      for (int d = 0; d < g.dim; ++d) center[d] = g.origin[d] + rng.uniform(0.0, g.side);
    }
    const double a = spec.value("a", 0.5), floor = spec.value("floor", 1e-3);
    const double h = g.cell_side();
    for (std::uint64_t i = 0; i < v.size(); ++i) {
      const CellIndex c = rowmajor_leaf(g, i);
      double r2 = 0.0;
      for (int d = 0; d < g.dim; ++d) {
        const double x = g.origin[d] + (c[d] + 0.5) * h - center[d];
        r2 += x * x;
      }
      v[i] = std::max(std::pow(std::sqrt(r2), a), floor);
    }
  }
  return GridFunction(g, std::move(v));
}

HalfSpaceFunction generate_halfspace(const RootGeometry& g, const Json& spec, std::uint64_t seed) {
  const std::string kind = spec.value("kind", std::string("uniform"));
  if (kind == "file") {
    HalfSpaceFunction F = load_halfspace(spec.at("path").get<std::string>());
    if (!(F.geometry == g)) throw InvalidArgument("input file geometry differs from the config");
    return F;
  }
  HalfSpaceFunction F(g);
  SplitMix64 rng(seed);
  const std::uint32_t pad = g.axis_cells();
  auto in_root = [&](std::uint64_t flat) {
    for (int d = g.dim - 1; d >= 0; --d) {
      const std::uint64_t c = flat % F.ambient_axis();
      flat /= F.ambient_axis();
      if (c < pad || c >= 2u * pad) return false;
    }
    return true;
  };
  auto root_to_ambient = [&](std::uint64_t row_major) {
    CellIndex c = rowmajor_leaf(g, row_major);
    for (int d = 0; d < g.dim; ++d) c[d] += pad;
    return F.ambient_index(c);
  };
  if (kind == "uniform") {
    const double lo = spec.value("low", 0.0), hi = spec.value("high", 1.0);
    const bool whole = spec.value("support", std::string("root")) == "ambient";
    for (auto& band : F.values)
      for (std::uint64_t y = 0; y < band.size(); ++y)
        if (whole || in_root(y)) band[y] = rng.uniform(lo, hi);
  } else if (kind == "spiky") {
    const auto atoms = spec.value("atoms", std::int64_t{1});
    const double height = spec.value("height", 1.0);
    for (std::int64_t a = 0; a < atoms; ++a) {
      const auto j = rng.below(static_cast<std::uint64_t>(g.depth));
      const auto cell = rng.below(g.leaf_count());
      F.values[j][root_to_ambient(cell)] += height;
    }
  } else {
    throw InvalidArgument("unknown half-space input kind: " + kind);
  }
  return F;
}

namespace {

std::unique_ptr<CubeFamily> grid_family(const GridFunction& f, const Json& fam, double r) {
  const RootGeometry& g = f.geometry;
  const std::string kind = fam.at("kind");
  if (kind == "canonical") {
    const std::string map = fam.at("map");
    auto data = std::make_shared<const GridFunction>(f);
    CanonicalFamily::Map m;
    if (map == "maximal") {
      m = [data](const DyadicCube& q) { return dyadic_maximal(*data, q); };
    } else if (map == "oscillation") {
      m = [data](const DyadicCube& q) {
        Field v = data->on_cube(q);
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        for (double& x : v) x = std::fabs(x - mean);
        return v;
      };
    } else {
      m = [data](const DyadicCube& q) { return data->on_cube(q); };
    }
    return std::make_unique<CanonicalFamily>(g, std::move(m), r);
  }
  if (kind == "operator") {
    const std::string op = fam.at("operator");
    Operator t = op == "identity" ? identity_operator()
                 : op == "average" ? dyadic_average_operator(g, static_cast<int>(fam.at("level").get<std::int64_t>()))
                 : op == "box"     ? box_convolution_operator(g, static_cast<int>(fam.at("radius").get<std::int64_t>()))
                                   : maximal_operator(g);
    return std::make_unique<OperatorLocalizationFamily>(f, std::move(t), fam.at("alpha").get<double>(), r);
  }
  if (kind == "lmo") return std::make_unique<LocalMeanOscillationFamily>(f, fam.at("lambda").get<double>());
  if (kind == "poincare") {
    const int m = static_cast<int>(fam.at("m").get<std::int64_t>());
    if (fam.at("maximal").get<bool>()) return std::make_unique<MaximalPoincareFamily>(f, m);
    return std::make_unique<PoincareFamily>(f, m);
  }
  const auto kernel = make_kernel(fam.at("kernel"));
  const double q = fam.at("q");
  return std::make_unique<BandFamily>(g, square_energies(f, *kernel, q).energy, q, "square");
}

std::unique_ptr<CubeFamily> build_family(const RootGeometry& g, const Json& fam, const Json& params,
                                         const Json& input, std::uint64_t seed) {
  const std::string kind = fam.at("kind");
  const double r = params.at("r");
  if (kind == "tent") {
    const HalfSpaceFunction F = generate_halfspace(g, input, seed);
    return std::make_unique<BandFamily>(g, band_energies(F, fam.at("alpha").get<double>(), ConeKind::Smooth), 2.0,
                                        "tent");
  }
  if (kind == "dyadic-sums") {
    const DiscreteMeasure mu(generate_measure(g, input, seed));
    return std::make_unique<DyadicSumsFamily>(potential(mu, 1.0, fam.at("gamma").get<double>()).alpha);
  }
  return grid_family(generate_gridfn(g, input, seed), fam, r);
}

Functional make_functional(const RootGeometry& g, const Json& p, const GridFunction& f) {
  const std::string kind = p.at("functional");
  const int m = static_cast<int>(p.at("m").get<std::int64_t>());
  if (kind == "oscillation") return oscillation_functional(f, m);
  if (kind == "power") return power_functional(g, p.at("scale"), p.at("exponent"));
  if (kind == "gradient") return gradient_functional(f);
  std::map<DyadicCube, double> table;
  for (const auto& e : p.at("table")) table[parse_address(e[0].get<std::string>(), g.dim)] = e[1].get<double>();
  return table_functional(std::move(table));
}

std::string curve_csv(const GoodLambdaCurve& c) {
  std::ostringstream s;
  write_curve_csv(s, c);
  return s.str();
}

}  // namespace

ExperimentResult run_experiment(const std::string& sub, const Json& raw_config) {
  const auto start = std::chrono::steady_clock::now();
  const Json config = normalize_config(sub, raw_config);
  const RootGeometry g = geometry_from_json(config["geometry"]);
  const Json& params = config["params"];
  const Json& input = config["input"];
  const bool with_coef = config["outputs"]["coefficients"];
  const auto seeds = config["seeds"].get<std::vector<std::uint64_t>>();

  ExperimentResult result;
  Json runs = Json::array();
  std::vector<double> constants;
  std::vector<std::string> failures;

  for (std::uint64_t seed : seeds) {
    Json run;
    run["seed"] = seed;
    bool passed = true;
    auto note = [&](bool ok, const std::vector<std::string>& msgs) {
      passed = passed && ok;
      for (const auto& m : msgs) failures.push_back("seed " + std::to_string(seed) + ": " + m);
    };

    if (sub == "verify-sparse" || sub == "bilinear" || sub == "ellr-check") {
      const auto fam = build_family(g, config["family"], params, input, seed);
      if (sub == "ellr-check") {
        const bool exhaustive = params["exhaustive"];
        const EllrResult e = check_ellr(*fam, g.root(), fam->r(), exhaustive,
                                        params["samples"].get<std::uint64_t>(), seed);
        const bool ok = e.constant <= fam->declared_cr() * (1.0 + 1e-12);
        run["ellr"] = ellr_json(g, e);
        run["declared_cr"] = fam->declared_cr();
        note(ok, ok ? std::vector<std::string>{} : std::vector<std::string>{"measured l^r constant exceeds the declared one"});
        constants.push_back(e.constant);
      } else {
        SparseParams sp;
        sp.eta = params["eta"];
        DominationReport rep;
        if (sub == "verify-sparse") {
          rep = build_sparse_pointwise(*fam, g.root(), sp);
        } else {
          sp.q = params["q"].get<double>();
          GridFunction weight(g, std::vector<double>(g.leaf_count(), 1.0));
          if (params["g"] == "random") {
            SplitMix64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
            for (double& x : weight.values) x = rng.uniform();
          }
          rep = build_sparse_bilinear(*fam, g.root(), sp, weight);
        }
        run["report"] = report_json(g, rep, with_coef);
        run["family_kind"] = fam->kind();
        note(rep.passed, rep.failures);
        constants.push_back(rep.empirical_constant);
      }
    } else if (sub == "poincare") {
      const GridFunction f = generate_gridfn(g, input, seed);
      const int m = static_cast<int>(params["m"].get<std::int64_t>());
      const PoincareReport pr = poincare_sparse(f, g.root(), m, params["eta"]);
      run["poincare"] = poincare_json(g, pr, with_coef);
      note(pr.passed, pr.failures);
      constants.push_back(pr.constant);

      const Weight w(generate_weight(g, config["weight"], seed));
      NormSpec norm;
      const std::string mode = params["mode"];
      norm.kind = mode == "ratio" ? NormSpec::Kind::Ratio : NormSpec::Kind::WeightedLp;
      norm.p = params["p"];
      norm.s = params["s"];
      norm.r = params["r"];
      SmallnessBudget budget;
      budget.exact_cells = params["exact_cells"];
      budget.random_antichains = params["random_antichains"];
      budget.seed = seed;
      const SelfImproveReport si =
          verify_self_improve(f, make_functional(g, params, f), g.root(), m, norm, w,
                              mode == "pointwise" ? SelfImproveMode::Pointwise : SelfImproveMode::LocalMaximal, budget);
      run["self_improve"] = self_improve_json(g, si);
      note(si.passed, si.failures);
    } else if (sub == "tent") {
      const HalfSpaceFunction F = generate_halfspace(g, input, seed);
      const TentReport tr = tent_sparse(F, g.root(), params["alpha"], params["eta"]);
      run["tent"] = tent_json(g, tr, with_coef);
      note(tr.passed, tr.failures);
      constants.push_back(tr.constant);
    } else if (sub == "square") {
      const GridFunction f = generate_gridfn(g, input, seed);
      const auto kernel = make_kernel(params["kernel"]);
      const SquareReport sr = square_sparse(f, g.root(), params["q"], *kernel, params["eta"]);
      run["square"] = square_json(g, sr, with_coef);
      note(sr.passed, sr.failures);
      constants.push_back(sr.constant);
    } else if (sub == "potential" || sub == "goodlambda-sums") {
      const DiscreteMeasure mu(generate_measure(g, input, seed));
      const double q = params["q"], delta = params["delta"], gamma = params["gamma"];
      const Potential pot = potential(mu, q, gamma);
      std::vector<double> lambdas = params["lambdas"];
      if (lambdas.empty()) {
        for (double qt : params["lambda_quantiles"].get<std::vector<double>>()) {
          const double l = quantile(pot.t.values, qt);
          if (l > 0.0 && std::find(lambdas.begin(), lambdas.end(), l) == lambdas.end()) lambdas.push_back(l);
        }
      }
      if (sub == "potential") {
        const double c = smallness_constant(pot.alpha, delta);
        run["smallness_constant"] = number_json(c);
        double t_max = 0.0, m_max = 0.0;
        for (double v : pot.t.values) t_max = std::max(t_max, v);
        for (double v : pot.m.values) m_max = std::max(m_max, v);
        run["t_max"] = t_max;
        run["m_max"] = m_max;
        if (with_coef) run["coefficients"] = coefficients_json(pot.alpha);
        if (std::isfinite(c)) {
          const SumSparseReport sr = sum_sparse(pot.alpha, delta, params["eta"]);
          run["sum_sparse"] = sum_sparse_json(g, sr, with_coef);
          note(sr.passed, sr.failures);
          constants.push_back(sr.constant);
        }
      }
      const GoodLambdaCurve curve = good_lambda_sums(pot.alpha, q, delta, lambdas, params["eps_grid"]);
      run["curve"] = curve_json(curve);
      note(curve.passed, curve.failures);
      result.artifacts["curve-" + std::to_string(seed) + ".csv"] = curve_csv(curve);
    } else if (sub == "goodlambda-tent") {
      const HalfSpaceFunction F = generate_halfspace(g, input, seed);
      const double alpha = params["alpha"];
      std::vector<double> lambdas = params["lambdas"];
      if (lambdas.empty()) {
        std::vector<double> a;
        for (const auto& row : band_energies(F, alpha, ConeKind::Sharp)) {
          double s = 0.0;
          for (double e : row) s += e;
          a.push_back(std::sqrt(s));
        }
        for (double qt : params["lambda_quantiles"].get<std::vector<double>>()) {
          const double l = quantile(a, qt);
          if (l > 0.0 && std::find(lambdas.begin(), lambdas.end(), l) == lambdas.end()) lambdas.push_back(l);
        }
      }
      const GoodLambdaCurve curve = tent_good_lambda(F, lambdas, params["gammas"], alpha);
      run["curve"] = curve_json(curve);
      note(curve.passed, curve.failures);
      result.artifacts["curve-" + std::to_string(seed) + ".csv"] = curve_csv(curve);
    } else {
      const std::string type = config["input"]["type"];
      const std::string name = "input-" + std::to_string(seed) + ".json";
      Json spec = config["input"];
      spec.erase("type");
      if (type == "halfspace") {
        Json j = geometry_json(g);
        const HalfSpaceFunction F = generate_halfspace(g, spec, seed);
        j["bands"] = F.bands();
        j["values"] = F.values;
        result.artifacts[name] = j.dump() + "\n";
      } else {
        const GridFunction f = type == "grid"      ? generate_gridfn(g, spec, seed)
                               : type == "measure" ? generate_measure(g, spec, seed)
                                                   : generate_weight(g, spec, seed);
        Json j = geometry_json(g);
        j["values"] = f.values;
        result.artifacts[name] = j.dump() + "\n";
      }
      if (config.contains("weight")) {
        Json j = geometry_json(g);
        j["values"] = generate_weight(g, config["weight"], seed).values;
        result.artifacts["weight-" + std::to_string(seed) + ".json"] = j.dump() + "\n";
      }
      run["files"] = Json::array();
      for (const auto& [file, text] : result.artifacts) run["files"].push_back(file);
    }
    run["passed"] = passed;
    result.passed = result.passed && passed;
    runs.push_back(run);
  }

  Json report;
  report["config"] = config;
  report["runs"] = runs;
  if (!constants.empty()) {
    report["aggregate"] = {{"median_constant", number_json(median(constants))},
                           {"max_constant", number_json(*std::max_element(constants.begin(), constants.end()))},
                           {"min_constant", number_json(*std::min_element(constants.begin(), constants.end()))}};
  }
  report["passed"] = result.passed;
  report["failures"] = failures;
  result.report = report;
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_outputs(const ExperimentResult& result, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  const std::filesystem::path dir(out_dir);
  write_text((dir / "report.json").string(), result.report.dump(2) + "\n");
  for (const auto& [name, text] : result.artifacts) write_text((dir / name).string(), text);
  write_text((dir / "timing.json").string(), Json{{"wall_seconds", result.wall_seconds}}.dump() + "\n");
}

std::unique_ptr<CubeFamily> family_from_grid(const GridFunction& f, const Json& family, std::optional<double> r) {
  std::optional<double> fixed_r;
  const Json fam = normalize_family(family, f.geometry, fixed_r);
  if (family_input(fam.at("kind")) != InputType::Grid)
    throw InvalidArgument("family kind '" + fam.at("kind").get<std::string>() + "' does not take a grid function");
  if (fixed_r && r && *r != *fixed_r) throw InvalidArgument("r is fixed to " + format_double(*fixed_r) + " by this family");
  const double rr = fixed_r ? *fixed_r : r.value_or(1.0);
  if (!(rr > 0.0)) throw InvalidArgument("r must be positive");
  return grid_family(f, fam, rr);
}

}  // namespace sparsedom
