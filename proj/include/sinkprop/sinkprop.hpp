#pragma once

#include "sinkprop/data.hpp"
#include "sinkprop/decode.hpp"
#include "sinkprop/dsm.hpp"
#include "sinkprop/error.hpp"
#include "sinkprop/model_io.hpp"
#include "sinkprop/objectives.hpp"
#include "sinkprop/optimize.hpp"
#include "sinkprop/param.hpp"
#include "sinkprop/train.hpp"
#include "sinkprop/types.hpp"
