#pragma once

// JSON conversions for report types, found by nlohmann::json through ADL.

#include "json.hpp"
#include "lossdyn/analysis.hpp"

namespace lossdyn {

using Json = nlohmann::ordered_json;

void to_json(Json& j, const Summary& v);
void from_json(const Json& j, Summary& v);
void to_json(Json& j, const CorrelationResult& v);
void from_json(const Json& j, CorrelationResult& v);
void to_json(Json& j, const RegressionResult& v);
void from_json(const Json& j, RegressionResult& v);
void to_json(Json& j, const KruskalWallisResult& v);
void from_json(const Json& j, KruskalWallisResult& v);
void to_json(Json& j, const WilcoxonResult& v);
void to_json(Json& j, const SeedAggregate& v);
void from_json(const Json& j, SeedAggregate& v);
void to_json(Json& j, const CalibrationMetrics& v);
void from_json(const Json& j, CalibrationMetrics& v);
void to_json(Json& j, const CalibrationReport& v);
void from_json(const Json& j, CalibrationReport& v);
void to_json(Json& j, const AnalysisReport& v);
void from_json(const Json& j, AnalysisReport& v);
void to_json(Json& j, const ConditionAggregate& v);
void to_json(Json& j, const CorrectionVerdicts& v);

/// Doubles that may be infinite or NaN are stored as null.
Json number_or_null(double x);
double number_or_nan(const Json& j);

std::string dump_report(const Json& j);

}  // namespace lossdyn
