#pragma once

#include "fols/alarm.hpp"
#include "fols/checkpoint.hpp"
#include "fols/data.hpp"
#include "fols/experiment.hpp"
#include "fols/loss.hpp"
#include "fols/model.hpp"
#include "fols/numerics.hpp"
#include "fols/serialization.hpp"
#include "fols/training.hpp"
