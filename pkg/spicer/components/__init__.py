# Componentes de saída: imagens, tabelas, avaliação e exportação
