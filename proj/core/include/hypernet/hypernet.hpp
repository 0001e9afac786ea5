#pragma once

#include "hypernet/blocks.hpp"
#include "hypernet/checkpoint.hpp"
#include "hypernet/config.hpp"
#include "hypernet/conv.hpp"
#include "hypernet/errors.hpp"
#include "hypernet/grad.hpp"
#include "hypernet/losses.hpp"
#include "hypernet/manifest.hpp"
#include "hypernet/metrics.hpp"
#include "hypernet/network.hpp"
#include "hypernet/optim.hpp"
#include "hypernet/rng.hpp"
#include "hypernet/synth.hpp"
#include "hypernet/tensor.hpp"
#include "hypernet/tensor_io.hpp"
#include "hypernet/train.hpp"
#include "hypernet/wavelet.hpp"
