#pragma once

#include "dpdnet/adam.hpp"
#include "dpdnet/confmap.hpp"
#include "dpdnet/conv.hpp"
#include "dpdnet/dataio.hpp"
#include "dpdnet/evaluation.hpp"
#include "dpdnet/gradcheck.hpp"
#include "dpdnet/layers.hpp"
#include "dpdnet/model.hpp"
#include "dpdnet/pipeline.hpp"
#include "dpdnet/synth.hpp"
#include "dpdnet/tensor.hpp"
#include "dpdnet/training.hpp"
