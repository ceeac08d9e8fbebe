#pragma once

#include "focuspar/error.hpp"
#include "focuspar/matrix.hpp"
#include "focuspar/autodiff.hpp"
#include "focuspar/ops.hpp"
#include "focuspar/nn.hpp"
#include "focuspar/schema.hpp"
#include "focuspar/hash.hpp"
#include "focuspar/synth.hpp"
#include "focuspar/encoders.hpp"
#include "focuspar/mgmt.hpp"
#include "focuspar/avfe.hpp"
#include "focuspar/losses.hpp"
#include "focuspar/metrics.hpp"
#include "focuspar/config.hpp"
#include "focuspar/model.hpp"
#include "focuspar/optim.hpp"
#include "focuspar/checkpoint.hpp"
#include "focuspar/train.hpp"
