#ifndef ADC_H
#define ADC_H

#include <stdint.h>

#define ADC_CHANNELS 8
#define ADC_MAX_RAW 4095u

typedef enum {
    ADC_OK = 0,
    ADC_ERR_CHANNEL,
    ADC_ERR_BUSY,
} adc_status_t;

typedef struct {
    uint16_t raw[ADC_CHANNELS];
    uint8_t enabled_mask;
} adc_state_t;

void adc_init(adc_state_t *st);
adc_status_t adc_enable_channel(adc_state_t *st, uint8_t channel);
adc_status_t adc_read_millivolts(const adc_state_t *st, uint8_t channel, uint32_t *out_mv);

#endif
