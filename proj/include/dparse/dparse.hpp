#pragma once

// single include for the whole toolkit

#include "dparse/analysis.hpp"
#include "dparse/autodiff.hpp"
#include "dparse/checkpoint.hpp"
#include "dparse/common.hpp"
#include "dparse/corpus.hpp"
#include "dparse/eval.hpp"
#include "dparse/experiment.hpp"
#include "dparse/layers.hpp"
#include "dparse/params.hpp"
#include "dparse/parser.hpp"
#include "dparse/tensor.hpp"
#include "dparse/tokenize.hpp"
#include "dparse/train.hpp"
