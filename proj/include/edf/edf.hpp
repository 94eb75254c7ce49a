#pragma once

#include "edf/classifier.hpp"
#include "edf/dtw.hpp"
#include "edf/error.hpp"
#include "edf/eval.hpp"
#include "edf/features.hpp"
#include "edf/ink.hpp"
#include "edf/preprocess.hpp"
#include "edf/trainer.hpp"
