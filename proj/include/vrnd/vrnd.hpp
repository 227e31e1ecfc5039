#pragma once

// Everything: model, training, audio, benchmark, detection and evaluation.

#include "vrnd/audio.hpp"
#include "vrnd/autodiff.hpp"
#include "vrnd/checkpoint.hpp"
#include "vrnd/config.hpp"
#include "vrnd/detector.hpp"
#include "vrnd/eval.hpp"
#include "vrnd/nn.hpp"
#include "vrnd/pipeline.hpp"
#include "vrnd/synthdata.hpp"
#include "vrnd/trainer.hpp"
#include "vrnd/vrnn.hpp"
