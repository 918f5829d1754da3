#pragma once

#include <string>

#include "kcobra/aggregator.hpp"
#include "kcobra/bandwidth.hpp"
#include "kcobra/simulate.hpp"

namespace kcobra {

//! Dataset file: header `y,x1,...,xd`, one row per observation. All numbers
//! are written in shortest round-trip form, so write/read is bitwise stable.
void write_dataset_csv(const std::string& path, const Dataset& data);
Dataset read_dataset_csv(const std::string& path);

//! Query file: like a dataset, but the leading `y` column is optional.
//! Without it every column is a feature and the returned y is empty.
Dataset read_query_csv(const std::string& path);

//! Prediction-matrix file: header `y,<learner>,...`, one row per retained
//! observation.
void write_prediction_matrix_csv(const std::string& path,
                                 const PredictionMatrix& pm);
PredictionMatrix read_prediction_matrix_csv(const std::string& path);

//! Prediction output: header `prediction,zero_mass`; zero_mass is 1 on rows
//! where no training point received kernel mass.
void write_predictions_csv(const std::string& path,
                           const PredictResult& result);

//! Tuning traces: `iter,h,loss` for the grid, `iter,h,loss,grad` for the
//! descent path.
void write_grid_trace_csv(const std::string& path, const GridResult& result);
void write_gd_trace_csv(const std::string& path, const GDResult& result);

}  // namespace kcobra
