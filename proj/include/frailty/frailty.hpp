#pragma once

#include "frailty/error.hpp"
#include "frailty/rng.hpp"
#include "frailty/volume_io.hpp"
#include "frailty/views.hpp"
#include "frailty/predictor.hpp"
#include "frailty/cv.hpp"
#include "frailty/discrepancy.hpp"
#include "frailty/cohort_io.hpp"
#include "frailty/survival.hpp"
#include "frailty/report.hpp"
#include "frailty/synth.hpp"
#include "frailty/pipeline.hpp"
