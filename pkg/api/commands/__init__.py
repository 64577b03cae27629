from api.commands import gradcheck, metrics, mi, sweep, synth, train

# Orden de aparición en `featprobe --help`
COMMANDS = [synth, metrics, mi, train, sweep, gradcheck]
