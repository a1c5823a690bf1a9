#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsedom/dyadic.hpp"
#include "sparsedom/dyadic_sums.hpp"
#include "sparsedom/good_lambda.hpp"
#include "sparsedom/gridfn.hpp"
#include "sparsedom/poincare.hpp"
#include "sparsedom/sparse_engine.hpp"
#include "sparsedom/square.hpp"
#include "sparsedom/tent.hpp"

namespace sparsedom {

using Json = nlohmann::json;

// Shortest round-trip decimal, independent of the C locale; "nan", "inf", "-inf".
std::string format_double(double x);

// Non-finite doubles become strings so reports stay valid JSON.
Json number_json(double x);

Json geometry_json(const RootGeometry& g);
RootGeometry geometry_from_json(const Json& j);

Json family_json(const RootGeometry& g, const SparseFamily& fam);
Json report_json(const RootGeometry& g, const DominationReport& r, bool with_coefficients);
Json ellr_json(const RootGeometry& g, const EllrResult& r);
Json tent_json(const RootGeometry& g, const TentReport& r, bool with_coefficients);
Json square_json(const RootGeometry& g, const SquareReport& r, bool with_coefficients);
Json poincare_json(const RootGeometry& g, const PoincareReport& r, bool with_coefficients);
Json self_improve_json(const RootGeometry& g, const SelfImproveReport& r);
Json sum_sparse_json(const RootGeometry& g, const SumSparseReport& r, bool with_coefficients);
Json curve_json(const GoodLambdaCurve& c);
Json coefficients_json(const CubeCoefficients& c);

// lambda,gamma_or_eps,bad_measure,superlevel_measure,ratio,overlap_min
void write_curve_csv(std::ostream& out, const GoodLambdaCurve& c);
std::vector<GoodLambdaRow> parse_curve_csv(const std::string& text);

// JSON: {"n", "L", "side", "origin", "values": [row-major]}. Binary: the same
// header without "values" but with "encoding": "f64le" on the first line,
// then the row-major values as little-endian IEEE doubles.
void save_gridfn(const std::string& path, const GridFunction& f, bool binary = false);
GridFunction load_gridfn(const std::string& path);

// {"n", "L", "side", "origin", "bands", "values": [[ambient row-major] per band]}
void save_halfspace(const std::string& path, const HalfSpaceFunction& F);
HalfSpaceFunction load_halfspace(const std::string& path);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace sparsedom
