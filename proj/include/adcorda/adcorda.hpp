#pragma once

#include "adcorda/attacks.hpp"
#include "adcorda/binary_io.hpp"
#include "adcorda/checkpoint.hpp"
#include "adcorda/classifier.hpp"
#include "adcorda/config.hpp"
#include "adcorda/coral.hpp"
#include "adcorda/dataset.hpp"
#include "adcorda/dataset_io.hpp"
#include "adcorda/error.hpp"
#include "adcorda/grad_check.hpp"
#include "adcorda/mlp.hpp"
#include "adcorda/optim.hpp"
#include "adcorda/pipeline.hpp"
#include "adcorda/quantization.hpp"
#include "adcorda/rng.hpp"
#include "adcorda/tape.hpp"
#include "adcorda/tensor.hpp"
#include "adcorda/text.hpp"
#include "adcorda/train.hpp"
