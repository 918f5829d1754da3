#include "kcobra/model_io.hpp"

#include <fstream>
#include <json.hpp>
#include <vector>

#include "kcobra/common.hpp"
#include "kcobra/kernel.hpp"

namespace kcobra {

namespace {

constexpr const char* kFormatTag = "consensual-aggregator";
constexpr int kFormatVersion = 1;

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(
        v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_model(const std::string& path, const AggregatorModel& model) {
    validate(model.predictions);
    nlohmann::json doc;
    doc["format"] = kFormatTag;
    doc["version"] = kFormatVersion;
    doc["kernel"] = kernel_token(model.kernel);
    doc["parametrization"] =
        model.bandwidth.parametrization == Parametrization::Scale
            ? "scale"
            : "inverse_scale";
    doc["bandwidth"] = model.bandwidth.h;
    doc["zero_mass_fallback"] =
        model.zero_mass_fallback == ZeroMassFallback::PaperZero ? "zero"
                                                                : "train_mean";
    doc["normalization"] = {{"min", to_std(model.norm.per_column_min)},
                            {"max", to_std(model.norm.per_column_max)}};
    doc["learner_names"] = model.predictions.learner_names;
    doc["responses"] = to_std(model.predictions.responses);
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(model.predictions.rows.rows()));
    for (Eigen::Index i = 0; i < model.predictions.rows.rows(); ++i) {
        const auto row = model.predictions.rows.row(i);
        rows.emplace_back(row.begin(), row.end());
    }
    doc["predictions"] = rows;

    std::ofstream file(path);
    if (!file) throw DataError("cannot write '" + path + "'");
    file << doc.dump(1) << '\n';
    file.flush();
    if (!file) throw DataError("write to '" + path + "' failed");
}

AggregatorModel load_model(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw DataError("cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        file >> doc;
    } catch (const nlohmann::json::exception& err) {
        throw DataError("'" + path + "' is not valid JSON: " + err.what());
    }

    try {
        if (!doc.is_object() ||
            doc.value("format", std::string{}) != kFormatTag) {
            throw DataError("'" + path + "' is not an aggregator model file");
        }
        if (doc.value("version", 0) != kFormatVersion) {
            throw DataError("'" + path +
                            "' has an unsupported model version: expected " +
                            std::to_string(kFormatVersion));
        }

        AggregatorModel model;
        model.kernel = parse_kernel_token(doc.at("kernel").get<std::string>());
        const std::string param =
            doc.at("parametrization").get<std::string>();
        if (param == "scale") {
            model.bandwidth.parametrization = Parametrization::Scale;
        } else if (param == "inverse_scale") {
            model.bandwidth.parametrization = Parametrization::InverseScale;
        } else {
            throw DataError("unknown parametrization '" + param + "'");
        }
        model.bandwidth.h = doc.at("bandwidth").get<double>();
        const std::string fallback =
            doc.at("zero_mass_fallback").get<std::string>();
        if (fallback == "zero") {
            model.zero_mass_fallback = ZeroMassFallback::PaperZero;
        } else if (fallback == "train_mean") {
            model.zero_mass_fallback = ZeroMassFallback::TrainMean;
        } else {
            throw DataError("unknown zero-mass fallback '" + fallback + "'");
        }

        model.norm.per_column_min = to_eigen(
            doc.at("normalization").at("min").get<std::vector<double>>());
        model.norm.per_column_max = to_eigen(
            doc.at("normalization").at("max").get<std::vector<double>>());
        model.predictions.learner_names =
            doc.at("learner_names").get<std::vector<std::string>>();
        model.predictions.responses =
            to_eigen(doc.at("responses").get<std::vector<double>>());

        const auto rows =
            doc.at("predictions").get<std::vector<std::vector<double>>>();
        if (rows.empty() || rows.front().empty()) {
            throw DataError("model file holds an empty prediction matrix");
        }
        model.predictions.rows.resize(
            static_cast<Eigen::Index>(rows.size()),
            static_cast<Eigen::Index>(rows.front().size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.front().size()) {
                throw DataError("model file has ragged prediction rows");
            }
            for (std::size_t m = 0; m < rows[i].size(); ++m) {
                model.predictions.rows(static_cast<Eigen::Index>(i),
                                       static_cast<Eigen::Index>(m)) =
                    rows[i][m];
            }
        }

        validate(model.predictions);
        if (model.norm.per_column_min.size() !=
                model.predictions.rows.cols() ||
            model.norm.per_column_max.size() !=
                model.predictions.rows.cols()) {
            throw DataError(
                "normalization width does not match the prediction matrix");
        }
        if (!(model.bandwidth.h > 0.0) || !std::isfinite(model.bandwidth.h)) {
            throw DataError("model bandwidth must be positive and finite");
        }
        if (model.bandwidth.parametrization == Parametrization::InverseScale &&
            !is_differentiable(model.kernel.family)) {
            throw DataError(
                "inverse-scale bandwidth requires the gauss or exp4 family");
        }
        return model;
    } catch (const nlohmann::json::exception& err) {
        throw DataError("'" + path + "' is missing model fields: " +
                        err.what());
    }
}

}  // namespace kcobra
