#pragma once

// Conditional anomaly detection for binary tabular data: distance metric
// learning, instance-specific probabilistic predictors, threshold detection,
// and the leave-one-out partial-ROC evaluation harness.

#include "conad/common.hpp"
#include "conad/dataset.hpp"
#include "conad/detector.hpp"
#include "conad/evaluation.hpp"
#include "conad/keyval.hpp"
#include "conad/metric.hpp"
#include "conad/nca.hpp"
#include "conad/predictors.hpp"
#include "conad/rng.hpp"
#include "conad/schema.hpp"
#include "conad/synthetic.hpp"
