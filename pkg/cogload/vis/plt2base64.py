import base64
import io


def plt2base64(fig):
    '''
    PNG bytes of a matplotlib figure (or the pyplot module) as a base64 string.
    '''
    pic_io = io.BytesIO()
    fig.savefig(pic_io, format='png', bbox_inches='tight')
    pic_io.seek(0)
    return bytes.decode(base64.b64encode(pic_io.read()))


def plt2html(fig):
    '''
    output an HTML img tag
    '''
    return '<img src="data:image/png;base64,' + plt2base64(fig) + '">'
