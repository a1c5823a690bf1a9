#include "sparsedom/sparsedom.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "sparsedom/errors.hpp"
#include "sparsedom/experiment.hpp"
#include "sparsedom/io.hpp"
#include "sparsedom/sparse_engine.hpp"

using namespace sparsedom;

struct sd_geometry {
  RootGeometry g;
};
struct sd_gridfn {
  GridFunction f;
};
struct sd_report {
  RootGeometry g;
  DominationReport report;
};
struct sd_run {
  ExperimentResult result;
  std::string json;
};

namespace {

thread_local std::string last_error;

sd_status fail(sd_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

template <class Fn>
sd_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    return fn();
  } catch (const InvalidArgument& e) {
    return fail(SD_ERR_INVALID_ARGUMENT, e.what());
  } catch (const DomainError& e) {
    return fail(SD_ERR_DOMAIN, e.what());
  } catch (const IoError& e) {
    return fail(SD_ERR_IO, e.what());
  } catch (const ParseError& e) {
    return fail(SD_ERR_PARSE, e.what());
  } catch (const PreconditionError& e) {
    return fail(SD_ERR_PRECONDITION, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(SD_ERR_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SD_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SD_ERR_INTERNAL, e.what());
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define SD_REQUIRE(cond)                                                        \
  do {                                                                          \
    if (!(cond)) return fail(SD_ERR_INVALID_ARGUMENT, "null argument: " #cond); \
  } while (0)

}  // namespace

extern "C" {

const char* sd_last_error(void) { return last_error.c_str(); }

const char* sd_version(void) { return "0.1.0"; }

void sd_string_free(char* s) { std::free(s); }

sd_status sd_geometry_create(int n, int L, double side, const double* origin, sd_geometry** out) {
  SD_REQUIRE(out);
  return guarded([&] {
    RootGeometry g;
    g.dim = n;
    g.depth = L;
    g.side = side;
    if (origin)
      for (int d = 0; d < n && d < kMaxDim; ++d) g.origin[d] = origin[d];
    g.validate();
    *out = new sd_geometry{g};
    return SD_OK;
  });
}

void sd_geometry_destroy(sd_geometry* g) { delete g; }

sd_status sd_geometry_leaf_count(const sd_geometry* g, uint64_t* out) {
  SD_REQUIRE(g && out);
  *out = g->g.leaf_count();
  return SD_OK;
}

sd_status sd_gridfn_create(const sd_geometry* g, const double* values, size_t count, sd_gridfn** out) {
  SD_REQUIRE(g && out && (values || count == 0));
  return guarded([&] {
    *out = new sd_gridfn{GridFunction(g->g, std::vector<double>(values, values + count))};
    return SD_OK;
  });
}

sd_status sd_gridfn_load(const char* path, sd_gridfn** out) {
  SD_REQUIRE(path && out);
  return guarded([&] {
    *out = new sd_gridfn{load_gridfn(path)};
    return SD_OK;
  });
}

sd_status sd_gridfn_save(const sd_gridfn* f, const char* path, int binary) {
  SD_REQUIRE(f && path);
  return guarded([&] {
    save_gridfn(path, f->f, binary != 0);
    return SD_OK;
  });
}

void sd_gridfn_destroy(sd_gridfn* f) { delete f; }

sd_status sd_gridfn_values(const sd_gridfn* f, const double** values, size_t* count) {
  SD_REQUIRE(f && values && count);
  *values = f->f.values.data();
  *count = f->f.values.size();
  return SD_OK;
}

sd_status sd_gridfn_p_average(const sd_gridfn* f, const char* cube, double p, double* out) {
  SD_REQUIRE(f && cube && out);
  return guarded([&] {
    const DyadicCube q = parse_address(cube, f->f.geometry.dim);
    require_in_tree(f->f.geometry, q);
    if (!(p > 0.0)) throw InvalidArgument("p must be positive");
    *out = p_average(f->f, q, p);
    return SD_OK;
  });
}

sd_status sd_gridfn_rearrangement(const sd_gridfn* f, double t, double* out) {
  SD_REQUIRE(f && out);
  return guarded([&] {
    if (!(t >= 0.0)) throw InvalidArgument("t must be nonnegative");
    *out = rearrangement(f->f).query(t);
    return SD_OK;
  });
}

sd_status sd_generate_inputs(const sd_geometry* g, const char* spec_json, uint64_t seed, const char* path) {
  SD_REQUIRE(g && spec_json && path);
  return guarded([&] {
    Json config;
    config["geometry"] = geometry_json(g->g);
    config["input"] = Json::parse(spec_json);
    config["seeds"] = {seed};
    const ExperimentResult r = run_experiment("generate", config);
    write_text(path, r.artifacts.begin()->second);
    return SD_OK;
  });
}

sd_status sd_build_sparse(const sd_gridfn* f, const char* family_json, double eta, double r, sd_report** out) {
  SD_REQUIRE(f && family_json && out);
  return guarded([&] {
    const auto fam = family_from_grid(f->f, Json::parse(family_json), r > 0.0 ? std::optional<double>(r) : std::nullopt);
    SparseParams params;
    params.eta = eta;
    params.validate();
    auto* rep = new sd_report{f->f.geometry, build_sparse_pointwise(*fam, f->f.geometry.root(), params)};
    *out = rep;
    if (!rep->report.passed) return fail(SD_ERR_ASSERTION, rep->report.failures.front());
    return SD_OK;
  });
}

sd_status sd_report_json(const sd_report* report, char** out) {
  SD_REQUIRE(report && out);
  return guarded([&] {
    *out = copy_string(report_json(report->g, report->report, true).dump());
    return SD_OK;
  });
}

sd_status sd_report_family_json(const sd_report* report, char** out) {
  SD_REQUIRE(report && out);
  return guarded([&] {
    *out = copy_string(family_json(report->g, report->report.construction.family).dump());
    return SD_OK;
  });
}

sd_status sd_report_empirical_constant(const sd_report* report, double* out) {
  SD_REQUIRE(report && out);
  *out = report->report.empirical_constant;
  return SD_OK;
}

int sd_report_passed(const sd_report* report) { return report && report->report.passed ? 1 : 0; }

void sd_report_destroy(sd_report* report) { delete report; }

sd_status sd_run_experiment(const char* subcommand, const char* config_json, const char* out_dir, sd_run** out) {
  SD_REQUIRE(subcommand && config_json && out);
  return guarded([&] {
    Json config;
    try {
      config = Json::parse(config_json);
    } catch (const Json::exception& e) {
      throw ParseError(std::string("config: ") + e.what());
    }
    auto run = std::make_unique<sd_run>();
    run->result = run_experiment(subcommand, config);
    run->json = run->result.report.dump(2) + "\n";
    if (out_dir) write_outputs(run->result, out_dir);
    const bool passed = run->result.passed;
    *out = run.release();
    if (!passed) return fail(SD_ERR_ASSERTION, "some checks failed; see the report");
    return SD_OK;
  });
}

int sd_run_passed(const sd_run* run) { return run && run->result.passed ? 1 : 0; }

sd_status sd_run_report_json(const sd_run* run, const char** out) {
  SD_REQUIRE(run && out);
  *out = run->json.c_str();
  return SD_OK;
}

void sd_run_destroy(sd_run* run) { delete run; }

}  // extern "C"
