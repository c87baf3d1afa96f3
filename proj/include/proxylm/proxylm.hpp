#pragma once

#include "proxylm/corpus_features.hpp"
#include "proxylm/csv.hpp"
#include "proxylm/error.hpp"
#include "proxylm/experiments.hpp"
#include "proxylm/lang_features.hpp"
#include "proxylm/pipeline.hpp"
#include "proxylm/random.hpp"
#include "proxylm/records.hpp"
#include "proxylm/regressors/gbt.hpp"
#include "proxylm/regressors/model.hpp"
#include "proxylm/regressors/mf.hpp"
#include "proxylm/regressors/poly.hpp"
#include "proxylm/regressors/presets.hpp"
#include "proxylm/regressors/standardize.hpp"
#include "proxylm/report.hpp"
